#include "fixdens/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fixdens {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'G', '1'};
constexpr double kSumTolerance = 1e-6;

void write_u32le(std::ostream& os, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(buf), 4);
}

uint32_t read_u32le(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  return static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
         (static_cast<uint32_t>(buf[2]) << 16) | (static_cast<uint32_t>(buf[3]) << 24);
}

double logsumexp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double DensityGrid::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

void DensityGrid::check_invariants() const {
  if (width < 1 || height < 1)
    throw std::runtime_error("grid: dimensions must be positive");
  if (values.size() != static_cast<size_t>(width) * height)
    throw std::runtime_error("grid: payload length does not match dimensions");
  for (double v : values)
    if (!std::isfinite(v)) throw std::runtime_error("grid: non-finite value");
  if (space == GridSpace::Probability) {
    for (double v : values)
      if (v < 0.0) throw std::runtime_error("grid: negative probability value");
    if (std::abs(sum() - 1.0) > kSumTolerance)
      throw std::runtime_error("grid: probability values do not sum to 1");
  } else {
    if (std::abs(logsumexp(values)) > kSumTolerance)
      throw std::runtime_error("grid: log values do not normalize to 1");
  }
}

void DensityGrid::normalize() {
  if (space != GridSpace::Probability)
    throw std::runtime_error("grid: normalize requires probability space");
  const double s = sum();
  if (!(s > 0.0) || !std::isfinite(s))
    throw std::runtime_error("grid: cannot normalize, sum is not positive");
  for (double& v : values) v /= s;
}

DensityGrid DensityGrid::to_log() const {
  if (space == GridSpace::Log) return *this;
  DensityGrid out = *this;
  out.space = GridSpace::Log;
  for (double& v : out.values) v = std::log(v);
  return out;
}

DensityGrid DensityGrid::to_probability() const {
  if (space == GridSpace::Probability) return *this;
  DensityGrid out = *this;
  out.space = GridSpace::Probability;
  for (double& v : out.values) v = std::exp(v);
  return out;
}

DensityGrid uniform_grid(const ImageGeometry& geom) {
  DensityGrid g;
  g.width = geom.width;
  g.height = geom.height;
  g.space = GridSpace::Probability;
  g.values.assign(static_cast<size_t>(geom.width) * geom.height, 1.0 / geom.area());
  return g;
}

DensityGrid read_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("grid: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("grid: bad magic in " + path);
  DensityGrid g;
  g.width = static_cast<int>(read_u32le(is));
  g.height = static_cast<int>(read_u32le(is));
  char tag = 0;
  is.read(&tag, 1);
  if (tag != 0 && tag != 1) throw std::runtime_error("grid: unknown space tag in " + path);
  g.space = tag == 0 ? GridSpace::Probability : GridSpace::Log;
  if (g.width < 1 || g.height < 1)
    throw std::runtime_error("grid: bad dimensions in " + path);
  const size_t n = static_cast<size_t>(g.width) * g.height;
  g.values.resize(n);
  static_assert(sizeof(double) == 8);
  is.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(n * 8));
  if (!is) throw std::runtime_error("grid: payload shorter than header claims in " + path);
  char extra;
  if (is.read(&extra, 1))
    throw std::runtime_error("grid: payload longer than header claims in " + path);
  g.check_invariants();
  return g;
}

void write_grid(const DensityGrid& grid, const std::string& path) {
  grid.check_invariants();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("grid: cannot write " + path);
  os.write(kMagic, 4);
  write_u32le(os, static_cast<uint32_t>(grid.width));
  write_u32le(os, static_cast<uint32_t>(grid.height));
  const char tag = grid.space == GridSpace::Probability ? 0 : 1;
  os.write(&tag, 1);
  os.write(reinterpret_cast<const char*>(grid.values.data()),
           static_cast<std::streamsize>(grid.values.size() * 8));
  if (!os) throw std::runtime_error("grid: write failed for " + path);
}

DensityGrid read_text_grid(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("grid: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("grid: empty text grid " + path);
  const size_t w = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != w) throw std::runtime_error("grid: ragged rows in " + path);
  DensityGrid g;
  g.width = static_cast<int>(w);
  g.height = static_cast<int>(rows.size());
  g.space = GridSpace::Probability;
  for (auto& r : rows) g.values.insert(g.values.end(), r.begin(), r.end());
  g.normalize();
  return g;
}

}  // namespace fixdens
