#pragma once

// FID and KID over pluggable image features, plus the PSD matrix square
// root the Fréchet distance needs. All metric math runs in double.

#include <functional>
#include <string>
#include <vector>

#include "acl/data.hpp"
#include "acl/rng.hpp"

namespace acl::metrics {

struct FeatureMatrix {
  std::int64_t n = 0, d = 0;
  std::vector<double> data;  // row-major n x d

  FeatureMatrix() = default;
  FeatureMatrix(std::int64_t n, std::int64_t d) : n(n), d(d), data(static_cast<std::size_t>(n * d), 0.0) {}
  double& at(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * d + j)]; }
  double at(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * d + j)]; }
};

using Extractor = std::function<std::vector<double>(const data::ImageU8&)>;

// "desk": 4x4 average-pooled RGB (48 dims) + 16-bin per-channel histograms
// (48 dims). Unknown ids raise a ConfigError listing the available ones.
Extractor make_extractor(const std::string& id);
std::vector<std::string> extractor_ids();

FeatureMatrix extract_features(const std::vector<data::ImageU8>& images, const Extractor& extractor);

// Symmetric eigendecomposition (cyclic Jacobi). Returns eigenvalues and the
// matrix whose COLUMN j is the eigenvector of values[j].
struct SymEig {
  std::vector<double> values;
  std::vector<double> vectors;  // row-major d x d
};
SymEig jacobi_eigen(std::vector<double> m, std::int64_t d);

// S with S*S ~= M for symmetric positive semidefinite M. Slightly negative
// eigenvalues (roundoff) clamp to zero; strongly indefinite input throws
// NumericalError.
std::vector<double> matrix_sqrt_psd(std::vector<double> m, std::int64_t d);

// Fréchet distance between Gaussian fits (1/(n-1) covariances, small
// relative ridge on both covariance diagonals before the square root).
double fid(const FeatureMatrix& a, const FeatureMatrix& b);

// Unbiased squared MMD with kernel (x.y/d + 1)^3, averaged over random
// subset pairs; reports mean and sample standard deviation.
struct KidResult {
  double mean = 0, std = 0;
};
KidResult kid(const FeatureMatrix& a, const FeatureMatrix& b, std::int64_t subset_size, std::int64_t n_subsets,
              Rng& rng);

struct EvalResult {
  double fid = 0;
  double kid_mean = 0, kid_std = 0;
  std::int64_t n_real = 0, n_fake = 0;
  std::int64_t kid_subset_size = 0, kid_n_subsets = 0;
  std::string extractor_id;
};

// Directory-level evaluation used by the CLI: loads every decodable image
// in each directory. KID defaults: subset_size = min(100, n), 100 subsets.
EvalResult evaluate_dirs(const std::filesystem::path& real_dir, const std::filesystem::path& fake_dir,
                         const std::string& extractor_id, std::uint64_t seed = 0);

std::string eval_result_to_json(const EvalResult& r);

}  // namespace acl::metrics
