#include "ecnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <set>

#include "ecnn/binary_io.hpp"
#include "ecnn/errors.hpp"
#include "ecnn/random.hpp"

namespace ecnn {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

class PgmScanner {
 public:
  explicit PgmScanner(std::string_view bytes) : bytes_(bytes) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw UnsupportedFormat("PGM: " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > 1'000'000) fail(std::string(what) + " too large");
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what);
    return v;
  }

  std::size_t pos_ = 0;
  std::string_view bytes_;
};

}  // namespace

std::size_t parse_tissue_class(std::string_view name) {
  const std::string n = lower(trim(name));
  for (std::size_t i = 0; i < kTissueClassNames.size(); ++i)
    if (n == kTissueClassNames[i]) return i;
  throw InvalidAnnotation("unknown class label '" + std::string(name) + "' (expected normal, benign or malignant)");
}

GrayImage parse_pgm(std::string_view bytes) {
  PgmScanner scan(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P') scan.fail("missing 'P' magic");
  if (bytes[1] != '5') {
    scan.pos_ = 1;
    scan.fail("only binary 8-bit PGM (P5) is supported, found P" + std::string(1, bytes[1]));
  }
  scan.pos_ = 2;
  GrayImage img;
  img.width = scan.number("width");
  img.height = scan.number("height");
  const std::size_t maxval = scan.number("maxval");
  if (img.width == 0 || img.height == 0) scan.fail("zero image extent");
  if (maxval == 0 || maxval > 255) scan.fail("maxval " + std::to_string(maxval) + " is not 8-bit");
  if (scan.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[scan.pos_])))
    scan.fail("expected whitespace after header");
  ++scan.pos_;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - scan.pos_ < n)
    scan.fail("truncated pixel data: need " + std::to_string(n) + " bytes, have " +
              std::to_string(bytes.size() - scan.pos_));
  img.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[scan.pos_ + i])) / 255.0;
  return img;
}

GrayImage load_image(const std::string& path) { return parse_pgm(read_file(path)); }

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& image, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw InvalidArgument("resize_bilinear: target extent must be positive");
  auto axis = [](std::size_t in, std::size_t out) {
    struct Tap {
      std::size_t i0, i1;
      double t;
    };
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      taps[o] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return taps;
  };
  const auto xs = axis(image.width, width);
  const auto ys = axis(image.height, height);
  GrayImage out{width, height, std::vector<double>(width * height)};
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const auto& tx = xs[x];
      const auto& ty = ys[y];
      const double top = image.at(tx.i0, ty.i0) * (1.0 - tx.t) + image.at(tx.i1, ty.i0) * tx.t;
      const double bottom = image.at(tx.i0, ty.i1) * (1.0 - tx.t) + image.at(tx.i1, ty.i1) * tx.t;
      out.pixels[y * width + x] = top * (1.0 - ty.t) + bottom * ty.t;
    }
  return out;
}

RoiSample extract_roi(const GrayImage& image, const Annotation& a, std::size_t out_resolution) {
  if (a.radius <= 0) throw InvalidAnnotation("ROI radius must be positive, got " + std::to_string(a.radius));
  if (a.cx < 0 || a.cy < 0 || a.cx >= static_cast<long>(image.width) || a.cy >= static_cast<long>(image.height))
    throw InvalidAnnotation("ROI center (" + std::to_string(a.cx) + "," + std::to_string(a.cy) +
                            ") lies outside the " + std::to_string(image.width) + "x" +
                            std::to_string(image.height) + " image");
  if (a.label >= kNumTissueClasses) throw InvalidAnnotation("ROI label " + std::to_string(a.label) + " out of range");
  if (out_resolution == 0) throw InvalidArgument("extract_roi: out_resolution must be positive");

  const auto side = static_cast<std::size_t>(2 * a.radius);
  GrayImage crop{side, side, std::vector<double>(side * side, 0.0)};
  const long x0 = a.cx - a.radius, y0 = a.cy - a.radius;
  for (std::size_t j = 0; j < side; ++j)
    for (std::size_t i = 0; i < side; ++i) {
      const long x = x0 + static_cast<long>(i), y = y0 + static_cast<long>(j);
      if (x >= 0 && y >= 0 && x < static_cast<long>(image.width) && y < static_cast<long>(image.height))
        crop.pixels[j * side + i] = image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
    }
  GrayImage patch = side == out_resolution ? std::move(crop) : resize_bilinear(crop, out_resolution, out_resolution);
  RoiSample s;
  s.patch = Tensor({1, out_resolution, out_resolution}, std::move(patch.pixels));
  s.label = a.label;
  s.source_id = a.image;
  return s;
}

std::vector<Annotation> parse_annotations(std::string_view csv) {
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    const std::string line = trim(csv.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (!header_seen) {
      if (cells != std::vector<std::string>{"image", "cx", "cy", "radius", "label"})
        throw InvalidAnnotation("annotations line 1: expected header 'image,cx,cy,radius,label'");
      header_seen = true;
      continue;
    }
    if (cells.size() != 5)
      throw InvalidAnnotation("annotations line " + std::to_string(line_no) + ": expected 5 fields, got " +
                              std::to_string(cells.size()));
    Annotation a;
    a.image = cells[0];
    try {
      std::size_t used = 0;
      a.cx = std::stol(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("cx");
      a.cy = std::stol(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("cy");
      a.radius = std::stol(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument("radius");
    } catch (const std::logic_error&) {
      throw InvalidAnnotation("annotations line " + std::to_string(line_no) + ": malformed integer field");
    }
    try {
      a.label = parse_tissue_class(cells[4]);
    } catch (const InvalidAnnotation& e) {
      throw InvalidAnnotation("annotations line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(a));
  }
  if (!header_seen) throw InvalidAnnotation("annotations file is empty");
  return out;
}

std::vector<RoiSample> load_roi_dataset(const std::string& image_dir, const std::string& annotations_csv,
                                        std::size_t resolution) {
  const auto annotations = parse_annotations(read_file(annotations_csv));
  std::vector<RoiSample> out;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    const auto img = load_image((std::filesystem::path(image_dir) / a.image).string());
    auto s = extract_roi(img, a, resolution);
    s.source_id = a.image + "#" + std::to_string(i + 1);
    out.push_back(std::move(s));
  }
  return out;
}

SynthSample synthesize_sample(std::uint64_t seed, std::size_t label, std::size_t index, std::size_t resolution) {
  if (label >= kNumTissueClasses) throw InvalidArgument("synthesize_sample: label out of range");
  if (resolution < 4) throw InvalidArgument("synthesize_sample: resolution must be at least 4");
  SplitMix64 rng(SplitMix64::mix(seed, (static_cast<std::uint64_t>(label) << 32) | index));
  const double r = static_cast<double>(resolution);
  const double mid = (r - 1.0) / 2.0;

  const double base = rng.uniform(0.15, 0.30);
  const double gx = rng.uniform(-0.05, 0.05) / r;
  const double gy = rng.uniform(-0.05, 0.05) / r;
  std::vector<double> px(resolution * resolution);
  for (std::size_t y = 0; y < resolution; ++y)
    for (std::size_t x = 0; x < resolution; ++x)
      px[y * resolution + x] = base + gx * (static_cast<double>(x) - mid) + gy * (static_cast<double>(y) - mid) +
                               rng.uniform(-0.04, 0.04);

  SynthLesion lesion;
  if (label != 0) {
    std::vector<char> mask(px.size(), 0);
    lesion.cx = rng.uniform(0.3 * r, 0.7 * r);
    lesion.cy = rng.uniform(0.3 * r, 0.7 * r);
    const double brightness = rng.uniform(0.40, 0.55);
    lesion.radius = label == 1 ? rng.uniform(0.18 * r, 0.28 * r) : rng.uniform(0.10 * r, 0.16 * r);
    const double r2 = lesion.radius * lesion.radius;
    for (std::size_t y = 0; y < resolution; ++y)
      for (std::size_t x = 0; x < resolution; ++x) {
        const double dx = static_cast<double>(x) - lesion.cx, dy = static_cast<double>(y) - lesion.cy;
        if (dx * dx + dy * dy <= r2) mask[y * resolution + x] = 1;
      }
    if (label == 2) {
      lesion.spikes = 5 + static_cast<std::size_t>(rng.below(4));
      for (std::size_t s = 0; s < lesion.spikes; ++s) {
        double ux, uy, norm2;
        do {
          ux = rng.uniform(-1.0, 1.0);
          uy = rng.uniform(-1.0, 1.0);
          norm2 = ux * ux + uy * uy;
        } while (norm2 < 0.01 || norm2 > 1.0);
        const double norm = std::sqrt(norm2);
        ux /= norm;
        uy /= norm;
        const double length = rng.uniform(0.30 * r, 0.45 * r);
        for (double t = 0.0; t <= length; t += 0.5) {
          const double fx = std::floor(lesion.cx + ux * t + 0.5), fy = std::floor(lesion.cy + uy * t + 0.5);
          if (fx < 0 || fy < 0 || fx >= r || fy >= r) break;
          mask[static_cast<std::size_t>(fy) * resolution + static_cast<std::size_t>(fx)] = 1;
        }
      }
    }
    for (std::size_t i = 0; i < px.size(); ++i)
      if (mask[i]) px[i] += brightness;
  }
  for (auto& v : px) v = std::clamp(v, 0.0, 1.0);

  SynthSample out;
  out.sample.patch = Tensor({1, resolution, resolution}, std::move(px));
  out.sample.label = label;
  out.sample.source_id = "synth-" + std::string(kTissueClassNames[label]) + "-" + std::to_string(index);
  out.lesion = lesion;
  return out;
}

std::vector<RoiSample> synthesize_dataset(std::uint64_t seed, std::size_t per_class, std::size_t resolution) {
  if (per_class == 0) throw InvalidArgument("synthesize_dataset: per_class must be at least 1");
  std::vector<RoiSample> out;
  out.reserve(per_class * kNumTissueClasses);
  for (std::size_t label = 0; label < kNumTissueClasses; ++label)
    for (std::size_t i = 0; i < per_class; ++i) out.push_back(synthesize_sample(seed, label, i, resolution).sample);
  return out;
}

DatasetSplit train_test_split(std::span<const RoiSample> samples, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw InvalidArgument("train_test_split: test_fraction must lie strictly between 0 and 1");
  std::set<std::string> ids;
  std::size_t num_classes = 0;
  for (const auto& s : samples) {
    if (!ids.insert(s.source_id).second)
      throw InvalidArgument("train_test_split: duplicate source_id '" + s.source_id + "'");
    num_classes = std::max(num_classes, s.label + 1);
  }
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t c = 0; c < std::max(num_classes, kNumTissueClasses); ++c)
    split.class_names.push_back(c < kNumTissueClasses ? std::string(kTissueClassNames[c]) : std::to_string(c));

  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == c) members.push_back(i);
    if (members.empty()) continue;
    SplitMix64 rng(SplitMix64::mix(seed, c));
    for (std::size_t i = members.size() - 1; i > 0; --i) std::swap(members[i], members[rng.below(i + 1)]);
    const auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(members.size())));
    if (n_test == 0 || n_test == members.size())
      throw InvalidSplit("class " + split.class_names[c] + " with " + std::to_string(members.size()) +
                         " samples leaves an empty train or test part at test_fraction " +
                         std::to_string(test_fraction));
    for (std::size_t i = 0; i < members.size(); ++i)
      (i < n_test ? split.test : split.train).push_back(samples[members[i]]);
  }
  if (split.train.empty() || split.test.empty()) throw InvalidSplit("dataset is empty");
  return split;
}

Tensor stack_patches(std::span<const RoiSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("stack_patches: no samples");
  const Shape& first = samples[indices.front()].patch.shape();
  std::vector<double> values;
  values.reserve(indices.size() * shape_numel(first));
  for (auto i : indices) {
    const auto& p = samples[i].patch;
    if (p.shape() != first)
      throw InvalidShape("stack_patches: patch " + shape_str(p.shape()) + " differs from " + shape_str(first));
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  return Tensor(std::move(shape), std::move(values));
}

Tensor stack_patches(std::span<const RoiSample> samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return stack_patches(samples, all);
}

std::vector<RoiSample> resample(std::span<const RoiSample> samples, std::size_t resolution) {
  std::vector<RoiSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.patch.rank() != 3 || s.patch.dim(0) != 1) throw InvalidShape("resample: expected [1,H,W] patches");
    if (s.patch.dim(1) == resolution && s.patch.dim(2) == resolution) {
      out.push_back(s);
      continue;
    }
    GrayImage img{s.patch.dim(2), s.patch.dim(1), std::vector<double>(s.patch.data().begin(), s.patch.data().end())};
    auto resized = resize_bilinear(img, resolution, resolution);
    out.push_back({Tensor({1, resolution, resolution}, std::move(resized.pixels)), s.label, s.source_id});
  }
  return out;
}

std::string encode_dataset(std::span<const RoiSample> samples) {
  BinaryWriter w;
  w.bytes("ENSD");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    w.text(s.source_id);
    w.u32(static_cast<std::uint32_t>(s.label));
    w.tensor("patch", s.patch);
  }
  return w.buffer();
}

std::vector<RoiSample> decode_dataset(std::string_view bytes) {
  BinaryReader<CorruptCheckpoint> r(bytes);
  if (r.bytes(4) != "ENSD") throw CorruptCheckpoint("dataset cache: bad magic");
  if (const auto v = r.u32(); v != 1) throw CorruptCheckpoint("dataset cache: unsupported version " + std::to_string(v));
  const auto n = r.u32();
  std::vector<RoiSample> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    RoiSample s;
    s.source_id = r.text();
    s.label = r.u32();
    auto e = r.tensor();
    s.patch = Tensor(std::move(e.shape), std::move(e.values));
    out.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw CorruptCheckpoint("dataset cache: trailing bytes");
  return out;
}

}  // namespace ecnn
