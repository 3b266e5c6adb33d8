#include "neurolgp/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "neurolgp/error.hpp"
#include "neurolgp/random.hpp"

namespace neurolgp {

namespace fs = std::filesystem;

namespace {

DatasetSplit& split_ref(Dataset& d, std::size_t i) {
  switch (i) {
    case 0:
      return d.train;
    case 1:
      return d.validation;
    case 2:
      return d.test;
    default:
      return d.test2;
  }
}

const DatasetSplit& split_ref(const Dataset& d, std::size_t i) { return split_ref(const_cast<Dataset&>(d), i); }

void write_f32(const fs::path& file, const std::vector<double>& values) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(buf.data() + 4 * i, &bits, 4);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + file.string());
}

std::vector<double> read_f32(const fs::path& file, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<char> buf(count * 4);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(file.string() + " is truncated");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(file.string() + " is longer than meta.json declares");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, buf.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return values;
}

void write_labels(const fs::path& file, const std::vector<int>& labels) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

std::vector<int> read_labels(const fs::path& file, std::size_t count, std::size_t classes) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("index,label", 0) != 0) throw IoError(file.string() + ": missing 'index,label' header");
  std::vector<int> labels;
  labels.reserve(count);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(file.string() + ": malformed row '" + line + "'");
    std::size_t index = 0;
    int label = 0;
    try {
      index = std::stoul(line.substr(0, comma));
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IoError(file.string() + ": malformed row '" + line + "'");
    }
    if (index != labels.size()) throw IoError(file.string() + ": rows must be in index order");
    if (label < 0 || static_cast<std::size_t>(label) >= classes) throw IoError(file.string() + ": label out of range");
    labels.push_back(label);
  }
  if (labels.size() != count) throw IoError(file.string() + ": label count does not match meta.json");
  return labels;
}

// Distance from point p to segment [a, b].
double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

DatasetSplit synth_split(const SyntheticSpec& spec, std::size_t n, Rng& rng) {
  DatasetSplit s;
  s.sample_shape = {spec.height, spec.width, spec.channels};
  s.num_classes = spec.classes;
  s.images.assign(n * s.sample_shape.volume(), 0.0);
  s.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.labels[i] = static_cast<int>(i % spec.classes);
  rng.shuffle(std::span<int>(s.labels));

  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  const double bar_half = std::max(1.5, std::min(h, w) / 4.0);
  std::vector<double> gains(spec.channels);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = std::numbers::pi * static_cast<double>(s.labels[i]) / static_cast<double>(spec.classes);
    const double cx = rng.uniform(bar_half, w - bar_half), cy = rng.uniform(bar_half, h - bar_half);
    const double ax = cx - bar_half * std::cos(angle), ay = cy - bar_half * std::sin(angle);
    const double bx = cx + bar_half * std::cos(angle), by = cy + bar_half * std::sin(angle);
    const double blob_x = rng.uniform(0.0, w), blob_y = rng.uniform(0.0, h);
    const double blob_r = rng.uniform(1.0, std::max(1.5, std::min(h, w) / 5.0));
    const double offset = rng.uniform(-0.2, 0.2);
    for (auto& g : gains) g = rng.uniform(0.7, 1.0);
    double* img = s.images.data() + i * s.sample_shape.volume();
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const double d = segment_distance(px, py, ax, ay, bx, by);
        const double bar = d < 0.75 ? 1.0 : (d < 1.25 ? 0.5 : 0.0);
        const double r2 = ((px - blob_x) * (px - blob_x) + (py - blob_y) * (py - blob_y)) / (blob_r * blob_r);
        const double blob = 0.6 * std::exp(-r2);
        for (std::size_t c = 0; c < spec.channels; ++c) {
          // Stored at float precision so in-memory data equals what load_dataset reads back.
          img[(y * spec.width + x) * spec.channels + c] =
              static_cast<float>(gains[c] * (bar + blob) + offset + spec.noise * rng.normal());
        }
      }
    }
  }
  return s;
}

}  // namespace

DatasetSplit DatasetSplit::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw std::out_of_range("DatasetSplit::slice");
  DatasetSplit out;
  out.sample_shape = sample_shape;
  out.num_classes = num_classes;
  const std::size_t v = sample_shape.volume();
  out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(first * v),
                    images.begin() + static_cast<std::ptrdiff_t>((first + count) * v));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw IoError("cannot read " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json: " + std::string(e.what()));
  }
  Dataset d;
  try {
    d.shape = {meta.at("height").get<std::size_t>(), meta.at("width").get<std::size_t>(),
               meta.at("channels").get<std::size_t>()};
    d.num_classes = meta.at("num_classes").get<std::size_t>();
    if (d.shape.volume() == 0 || d.num_classes == 0) throw IoError("meta.json: empty shape or no classes");
    for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
      const std::string name = kSplitNames[i];
      const std::size_t n = meta.at("splits").at(name).get<std::size_t>();
      DatasetSplit& s = split_ref(d, i);
      s.sample_shape = d.shape;
      s.num_classes = d.num_classes;
      s.images = read_f32(dir / (name + ".f32"), n * d.shape.volume());
      s.labels = read_labels(dir / (name + "_labels.csv"), n, d.num_classes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("meta.json: " + std::string(e.what()));
  }
  return d;
}

void save_dataset(const Dataset& d, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json meta;
  meta["format"] = "neurolgp-dataset";
  meta["version"] = 1;
  meta["height"] = d.shape.height;
  meta["width"] = d.shape.width;
  meta["channels"] = d.shape.channels;
  meta["num_classes"] = d.num_classes;
  meta["layout"] = "sample-major, row-major (height, width, channels), little-endian float32";
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    const DatasetSplit& s = split_ref(d, i);
    meta["splits"][kSplitNames[i]] = s.size();
    write_f32(dir / (std::string(kSplitNames[i]) + ".f32"), s.images);
    write_labels(dir / (std::string(kSplitNames[i]) + "_labels.csv"), s.labels);
  }
  std::ofstream out(dir / "meta.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

void SyntheticSpec::validate() const {
  if (height < 2 || width < 2 || channels < 1) throw ConfigError("synthetic images must be at least 2x2x1");
  if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (samples < 3 * classes) throw ConfigError("too few samples for the requested classes");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const double total = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(spec.samples) * spec.ratios[1] / total));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(spec.samples) * spec.ratios[2] / total));
  const std::size_t n_train = spec.samples - n_val - n_test;
  const std::size_t n_test2 = spec.test2_samples ? spec.test2_samples : n_test;
  if (n_train < spec.classes || n_val < 1 || n_test < 1) throw ConfigError("split sizes too small");

  Dataset d;
  d.shape = {spec.height, spec.width, spec.channels};
  d.num_classes = spec.classes;
  const std::array<std::size_t, 4> sizes{n_train, n_val, n_test, n_test2};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    Rng rng(derive_seed(spec.seed, {0x5a11ULL, i}));
    split_ref(d, i) = synth_split(spec, sizes[i], rng);
  }
  return d;
}

}  // namespace neurolgp
