#include <algorithm>
#include <iostream>

#include "acl/data.hpp"

namespace acl::data {

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::filesystem::path> scan_domain(const std::filesystem::path& dir, const char* label) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DatasetError(std::string(label) + " directory does not exist: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<fs::path> ok;
  for (const auto& f : files) {
    try {
      load_image(f);
      ok.push_back(f);
    } catch (const IoError& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
    }
  }
  if (ok.empty())
    throw DatasetError(std::string(label) + " domain has no decodable images in " + dir.string());
  return ok;
}

}  // namespace

UnpairedDataset::UnpairedDataset(const std::filesystem::path& dir_s, const std::filesystem::path& dir_t)
    : s_(scan_domain(dir_s, "source")), t_(scan_domain(dir_t, "target")) {}

ImageU8 UnpairedDataset::load(Domain d, std::size_t index) const {
  const auto& list = paths(d);
  if (index >= list.size()) throw ArgumentError("dataset index out of range");
  return load_image(list[index]);
}

}  // namespace acl::data
