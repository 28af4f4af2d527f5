#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fixdens/geometry.hpp"

namespace fixdens {

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<double> pixels_per_degree;
  std::optional<std::string> saliency_grid_path;

  ImageGeometry geometry() const { return {width, height}; }
};

struct FixationRow {
  std::string subject_id;
  Point position;
};

struct FixationTable {
  std::string image_id;
  std::vector<FixationRow> rows;

  std::vector<Point> points() const;
  /// Distinct subject ids in sorted order.
  std::vector<std::string> subjects() const;
  size_t subject_count() const { return subjects().size(); }
};

struct DatasetBundle {
  std::vector<ImageRecord> images;  // sorted by image_id
  std::map<std::string, FixationTable> fixations;
  std::set<std::string> excluded;

  const ImageRecord* find_image(const std::string& image_id) const;
  /// Images with at least two subjects, i.e. usable for LOSO evaluation.
  std::vector<std::string> crossvalidatable_image_ids() const;
};

/// CSV with header `image_id,subject_id,x,y`; metadata JSON is an array of
/// {image_id, width, height, pixels_per_degree?, saliency_grid_path?}.
DatasetBundle load_dataset(const std::string& fixation_csv_path,
                           const std::string& images_json_path,
                           const std::set<std::string>& exclusion_list = {});

/// Plain text, one image_id per line; blank lines and lines starting with
/// '#' are skipped.
std::set<std::string> load_exclusion_list(const std::string& path);

void save_dataset(const DatasetBundle& bundle, const std::string& fixation_csv_path,
                  const std::string& images_json_path);

}  // namespace fixdens
