#include "fixdens/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fixdens {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& s, const std::string& what, size_t line_no) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("fixation csv line " + std::to_string(line_no) +
                             ": cannot parse " + what + " '" + s + "'");
  }
  if (pos != s.size())
    throw std::runtime_error("fixation csv line " + std::to_string(line_no) +
                             ": trailing characters in " + what + " '" + s + "'");
  return v;
}

}  // namespace

std::vector<Point> FixationTable::points() const {
  std::vector<Point> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.position);
  return out;
}

std::vector<std::string> FixationTable::subjects() const {
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.subject_id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const ImageRecord* DatasetBundle::find_image(const std::string& image_id) const {
  for (const auto& img : images)
    if (img.image_id == image_id) return &img;
  return nullptr;
}

std::vector<std::string> DatasetBundle::crossvalidatable_image_ids() const {
  std::vector<std::string> out;
  for (const auto& img : images) {
    auto it = fixations.find(img.image_id);
    if (it != fixations.end() && it->second.subject_count() >= 2)
      out.push_back(img.image_id);
  }
  return out;
}

std::set<std::string> load_exclusion_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open exclusion list " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.insert(line);
  }
  return out;
}

DatasetBundle load_dataset(const std::string& fixation_csv_path,
                           const std::string& images_json_path,
                           const std::set<std::string>& exclusion_list) {
  DatasetBundle bundle;
  bundle.excluded = exclusion_list;

  std::ifstream js(images_json_path);
  if (!js) throw std::runtime_error("cannot open image metadata " + images_json_path);
  nlohmann::json meta = nlohmann::json::parse(js);
  if (!meta.is_array())
    throw std::runtime_error("image metadata must be a JSON array: " + images_json_path);
  for (const auto& obj : meta) {
    ImageRecord rec;
    rec.image_id = obj.at("image_id").get<std::string>();
    rec.width = obj.at("width").get<int>();
    rec.height = obj.at("height").get<int>();
    if (rec.width < 1 || rec.height < 1)
      throw std::runtime_error("image " + rec.image_id + ": non-positive dimensions");
    if (obj.contains("pixels_per_degree")) {
      rec.pixels_per_degree = obj["pixels_per_degree"].get<double>();
      if (*rec.pixels_per_degree <= 0.0)
        throw std::runtime_error("image " + rec.image_id + ": pixels_per_degree must be > 0");
    }
    if (obj.contains("saliency_grid_path"))
      rec.saliency_grid_path = obj["saliency_grid_path"].get<std::string>();
    if (exclusion_list.count(rec.image_id)) continue;
    if (bundle.find_image(rec.image_id))
      throw std::runtime_error("duplicate image_id " + rec.image_id);
    bundle.images.push_back(std::move(rec));
  }
  std::sort(bundle.images.begin(), bundle.images.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });

  std::ifstream cs(fixation_csv_path);
  if (!cs) throw std::runtime_error("cannot open fixation csv " + fixation_csv_path);
  std::string line;
  size_t line_no = 0;
  if (!std::getline(cs, line))
    throw std::runtime_error("fixation csv is empty: " + fixation_csv_path);
  ++line_no;
  while (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image_id,subject_id,x,y")
    throw std::runtime_error("fixation csv: unexpected header '" + line + "'");
  while (std::getline(cs, line)) {
    ++line_no;
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw std::runtime_error("fixation csv line " + std::to_string(line_no) +
                               ": expected 4 fields, got " + std::to_string(fields.size()));
    const std::string& image_id = fields[0];
    if (exclusion_list.count(image_id)) continue;
    const ImageRecord* img = bundle.find_image(image_id);
    if (!img)
      throw std::runtime_error("fixation csv line " + std::to_string(line_no) +
                               ": unknown image_id '" + image_id + "'");
    FixationRow row;
    row.subject_id = fields[1];
    row.position.x = parse_double(fields[2], "x", line_no);
    row.position.y = parse_double(fields[3], "y", line_no);
    if (!img->geometry().contains(row.position))
      throw std::runtime_error("fixation csv line " + std::to_string(line_no) +
                               ": fixation outside bounds of image '" + image_id + "'");
    auto& table = bundle.fixations[image_id];
    table.image_id = image_id;
    table.rows.push_back(std::move(row));
  }
  return bundle;
}

void save_dataset(const DatasetBundle& bundle, const std::string& fixation_csv_path,
                  const std::string& images_json_path) {
  nlohmann::json meta = nlohmann::json::array();
  for (const auto& img : bundle.images) {
    nlohmann::json obj{{"image_id", img.image_id},
                       {"width", img.width},
                       {"height", img.height}};
    if (img.pixels_per_degree) obj["pixels_per_degree"] = *img.pixels_per_degree;
    if (img.saliency_grid_path) obj["saliency_grid_path"] = *img.saliency_grid_path;
    meta.push_back(std::move(obj));
  }
  std::ofstream js(images_json_path);
  if (!js) throw std::runtime_error("cannot write " + images_json_path);
  js << meta.dump(2) << "\n";

  std::ofstream cs(fixation_csv_path);
  if (!cs) throw std::runtime_error("cannot write " + fixation_csv_path);
  cs << "image_id,subject_id,x,y\n";
  cs.precision(17);
  for (const auto& img : bundle.images) {
    auto it = bundle.fixations.find(img.image_id);
    if (it == bundle.fixations.end()) continue;
    for (const auto& row : it->second.rows)
      cs << img.image_id << ',' << row.subject_id << ',' << row.position.x << ','
         << row.position.y << '\n';
  }
}

}  // namespace fixdens
