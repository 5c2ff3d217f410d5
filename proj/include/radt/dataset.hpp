#pragma once

// Manifest and gaze CSV ingestion, train/validation split, batching.
//
// Manifest header: image_path,label[,cx,cy,h,w][,split]  (columns by name)
// Gaze header:     image_id,x,y[,timestamp]

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "radt/gaze_hva.hpp"
#include "radt/image_io.hpp"
#include "radt/losses.hpp"
#include "radt/rng.hpp"

namespace radt {

struct DataError : Error {
  using Error::Error;
};

enum class Split { train, val };

struct ManifestRow {
  std::string image_path;
  std::string label;
  std::optional<AttentionRegion> region;
  std::optional<Split> split;  // from the split column, if present
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> vocabulary;  // sorted; index = class id

  [[nodiscard]] std::size_t n_classes() const { return vocabulary.size(); }
  [[nodiscard]] std::size_t label_index(const std::string& label) const {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), label);
    if (it == vocabulary.end() || *it != label) throw DataError("unknown label '" + label + "'");
    return std::size_t(it - vocabulary.begin());
  }
};

namespace csv {

/// Splits one line on commas; double quotes group fields and "" escapes.
inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') out.back() += '"', ++i;
      else if (ch == '"') quoted = false;
      else out.back() += ch;
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  for (auto& f : out) {
    const auto b = f.find_first_not_of(' '), e = f.find_last_not_of(' ');
    f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
  }
  return out;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

struct Table {
  std::map<std::string, std::size_t> columns;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, fields)

  [[nodiscard]] std::optional<std::size_t> column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) return std::nullopt;
    return it->second;
  }
};

inline Table read(const std::string& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  Table t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_line(line);
    if (t.columns.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) t.columns[fields[i]] = i;
      for (const auto& r : required)
        if (!t.columns.count(r)) throw DataError(path + ": missing required column '" + r + "'");
      continue;
    }
    if (fields.size() != t.columns.size())
      throw DataError(path + ":" + std::to_string(n) + ": expected " + std::to_string(t.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    t.rows.emplace_back(n, std::move(fields));
  }
  if (t.columns.empty()) throw DataError(path + ": empty file");
  return t;
}

inline double number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw DataError(where + ": expected a number, got '" + s + "'");
  return v;
}

}  // namespace csv

/// Parses a manifest. Region columns are all-or-nothing per row; empty cells
/// mean "no region". An empty manifest is an error.
inline Manifest load_manifest(const std::string& path) {
  const auto t = csv::read(path, {"image_path", "label"});
  const auto ip = *t.column("image_path"), lb = *t.column("label");
  const auto cx = t.column("cx"), cy = t.column("cy"), ch = t.column("h"), cw = t.column("w");
  const auto sp = t.column("split");
  const bool has_region = cx && cy && ch && cw;
  if (!has_region && (cx || cy || ch || cw)) throw DataError(path + ": region columns must be cx,cy,h,w together");
  Manifest m;
  for (const auto& [line, f] : t.rows) {
    const auto where = path + ":" + std::to_string(line);
    ManifestRow r{f[ip], f[lb], std::nullopt, std::nullopt};
    if (r.image_path.empty()) throw DataError(where + ": empty image_path");
    if (r.label.empty()) throw DataError(where + ": empty label");
    if (has_region) {
      const bool any = !f[*cx].empty() || !f[*cy].empty() || !f[*ch].empty() || !f[*cw].empty();
      if (any)
        r.region = AttentionRegion{csv::number(f[*cx], where), csv::number(f[*cy], where), csv::number(f[*ch], where),
                                   csv::number(f[*cw], where)};
    }
    if (sp) {
      if (f[*sp] == "train") r.split = Split::train;
      else if (f[*sp] == "val" || f[*sp] == "validation") r.split = Split::val;
      else if (!f[*sp].empty()) throw DataError(where + ": split must be train or val, got '" + f[*sp] + "'");
    }
    m.rows.push_back(std::move(r));
  }
  if (m.rows.empty()) throw DataError(path + ": empty manifest");
  for (const auto& r : m.rows) m.vocabulary.push_back(r.label);
  std::sort(m.vocabulary.begin(), m.vocabulary.end());
  m.vocabulary.erase(std::unique(m.vocabulary.begin(), m.vocabulary.end()), m.vocabulary.end());
  return m;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

/// The split column when present, else 15% of paths (by FNV-1a hash) go to val.
inline Split split_of(const ManifestRow& r) {
  if (r.split) return *r.split;
  return fnv1a(r.image_path) % 100 < 15 ? Split::val : Split::train;
}

/// Decoded, resized images with integer labels.
struct Dataset {
  Tensor<float> images;  // (N, S, S, C)
  std::vector<std::size_t> labels;
  std::vector<std::optional<AttentionRegion>> regions;
  std::vector<std::string> paths;

  [[nodiscard]] std::size_t size() const { return labels.size(); }

  [[nodiscard]] Tensor<float> gather(const std::vector<std::size_t>& idx) const {
    Shape s = images.shape();
    const std::size_t per = images.size() / s[0];
    s[0] = idx.size();
    Tensor<float> out(s);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy(images.data() + idx[i] * per, images.data() + (idx[i] + 1) * per, out.data() + i * per);
    return out;
  }
  [[nodiscard]] std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& idx) const {
    std::vector<std::size_t> out;
    for (auto i : idx) out.push_back(labels[i]);
    return out;
  }
  /// Throws naming the first sample without a region.
  [[nodiscard]] std::vector<AttentionRegion> gather_regions(const std::vector<std::size_t>& idx) const {
    std::vector<AttentionRegion> out;
    for (auto i : idx) {
      if (!regions[i]) throw DataError("missing attention region for '" + paths[i] + "'");
      out.push_back(*regions[i]);
    }
    return out;
  }
  [[nodiscard]] Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.images = gather(idx);
    for (auto i : idx) {
      d.labels.push_back(labels[i]);
      d.regions.push_back(regions[i]);
      d.paths.push_back(paths[i]);
    }
    return d;
  }
};

inline std::filesystem::path resolve(const std::string& root, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || root.empty() ? path : std::filesystem::path(root) / path;
}

/// Decodes every manifest image and resizes it to size x size.
inline Dataset load_images(const Manifest& m, const std::string& image_root, std::size_t size, std::size_t channels) {
  Dataset d;
  d.images = Tensor<float>({m.rows.size(), size, size, channels});
  const std::size_t per = size * size * channels;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    if (!std::filesystem::exists(resolve(image_root, r.image_path)))
      throw DataError("missing image file '" + resolve(image_root, r.image_path).string() + "'");
    auto img = resize_bilinear(read_png(resolve(image_root, r.image_path).string(), channels), size, size);
    std::copy(img.data(), img.data() + per, d.images.data() + i * per);
    d.labels.push_back(m.label_index(r.label));
    d.regions.push_back(r.region);
    d.paths.push_back(r.image_path);
  }
  return d;
}

struct SplitData {
  Dataset train, val;
};

inline SplitData split_dataset(const Manifest& m, const Dataset& d) {
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < m.rows.size(); ++i) (split_of(m.rows[i]) == Split::train ? tr : va).push_back(i);
  if (tr.empty()) throw DataError("manifest has no training rows");
  SplitData s{d.subset(tr), Dataset{}};
  if (!va.empty()) s.val = d.subset(va);
  return s;
}

/// Shuffled sample order for one epoch (Fisher-Yates on stream `epoch`).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = CounterRng(seed).split(0x5eed).split(epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

/// Consecutive batches of `order`; the last one may be short.
inline std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  if (batch_size == 0) throw Error("batches: batch_size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    out.emplace_back(order.begin() + long(i), order.begin() + long(std::min(order.size(), i + batch_size)));
  return out;
}

/// Gaze samples grouped by image id, file order preserved within each image.
inline std::map<std::string, std::vector<GazeRecord>> load_gaze(const std::string& path) {
  const auto t = csv::read(path, {"image_id", "x", "y"});
  const auto id = *t.column("image_id"), cx = *t.column("x"), cy = *t.column("y");
  const auto ts = t.column("timestamp");
  std::map<std::string, std::vector<GazeRecord>> out;
  for (const auto& [line, f] : t.rows) {
    const auto where = path + ":" + std::to_string(line);
    const double x = csv::number(f[cx], where), y = csv::number(f[cy], where);
    GazeRecord g{f[id], std::lround(std::floor(x)), std::lround(std::floor(y)), std::nullopt};
    if (ts && !f[*ts].empty()) g.timestamp = csv::number(f[*ts], where);
    out[g.image_id].push_back(g);
  }
  if (out.empty()) throw DataError(path + ": no gaze samples");
  return out;
}

}  // namespace radt
