// radt: gaze preprocessing, teacher/student training, evaluation, prediction.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "radt/radt.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct UsageError : radt::Error {
  using Error::Error;
};

std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

/// stdout unless a path is given.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*file_) throw radt::Error("cannot write '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

radt::RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    radt::RunConfig c;
    c.validate();
    return c;
  }
  return radt::load_config(path);
}

std::string default_root(const std::string& manifest, const std::string& root) {
  if (!root.empty()) return root;
  return fs::path(manifest).parent_path().string();
}

std::string sanitize(std::string id) {
  for (auto& c : id)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return id;
}

// ---------------------------------------------------------------------------

struct GazeArgs {
  std::string config, gaze, out, heatmap_dir, manifest, image_root;
  std::size_t width = 0, height = 0;
};

int preprocess_gaze(const GazeArgs& a) {
  const auto cfg = config_or_default(a.config);
  const auto gaze = radt::load_gaze(a.gaze);
  std::map<std::string, std::pair<std::size_t, std::size_t>> extents;  // image_id -> (H, W)
  if (!a.manifest.empty()) {
    const auto m = radt::load_manifest(a.manifest);
    const auto root = default_root(a.manifest, a.image_root);
    for (const auto& r : m.rows) {
      const auto img = radt::read_png(radt::resolve(root, r.image_path).string(), 1);
      extents[r.image_path] = {img.dim(0), img.dim(1)};
    }
  } else if (a.width == 0 || a.height == 0) {
    throw UsageError("preprocess-gaze needs --width and --height, or --manifest to read image sizes");
  }
  if (!a.heatmap_dir.empty()) fs::create_directories(a.heatmap_dir);
  Output out(a.out);
  out.stream() << "image_id,cx,cy,h,w\n";
  for (const auto& [id, points] : gaze) {
    std::size_t H = a.height, W = a.width;
    if (!extents.empty()) {
      auto it = extents.find(id);
      if (it == extents.end()) throw radt::DataError("gaze image id '" + id + "' is not in the manifest");
      std::tie(H, W) = it->second;
    }
    radt::HvaResult r;
    try {
      r = radt::hva_run(points, H, W, cfg.hva);
    } catch (const radt::Error& e) {
      throw radt::Error("image '" + id + "': " + e.what());
    }
    out.stream() << radt::csv::quote(id) << ',' << num(r.region.cx) << ',' << num(r.region.cy) << ',' << num(r.region.h)
                 << ',' << num(r.region.w) << '\n';
    if (!a.heatmap_dir.empty()) {
      radt::Tensor<float> img({H, W, 1});
      for (std::size_t i = 0; i < H * W; ++i) img[i] = float(r.heatmap.values[i] / 255.0);
      radt::write_png((fs::path(a.heatmap_dir) / (sanitize(id) + ".png")).string(), img);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, manifest, image_root, regions, teacher_checkpoint, out, log;
};

/// Fills missing manifest regions from an image_id,cx,cy,h,w CSV.
void join_regions(radt::Manifest& m, const std::string& path) {
  const auto t = radt::csv::read(path, {"image_id", "cx", "cy", "h", "w"});
  std::map<std::string, radt::AttentionRegion> by_id;
  for (const auto& [line, f] : t.rows) {
    const auto where = path + ":" + std::to_string(line);
    auto num_at = [&](const char* c) { return radt::csv::number(f[*t.column(c)], where); };
    by_id[f[*t.column("image_id")]] = {num_at("cx"), num_at("cy"), num_at("h"), num_at("w")};
  }
  for (auto& r : m.rows) {
    auto it = by_id.find(r.image_path);
    if (it == by_id.end()) it = by_id.find(fs::path(r.image_path).stem().string());
    if (it != by_id.end()) r.region = it->second;
  }
}

struct Loaded {
  radt::Manifest manifest;
  radt::SplitData data;
};

Loaded load_data(const TrainArgs& a, const radt::RunConfig& cfg) {
  Loaded l{radt::load_manifest(a.manifest), {}};
  if (!a.regions.empty()) join_regions(l.manifest, a.regions);
  const auto d = radt::load_images(l.manifest, default_root(a.manifest, a.image_root), cfg.image_size, cfg.channels);
  l.data = radt::split_dataset(l.manifest, d);
  return l;
}

radt::EpochLogger logger(Output& log) {
  return [&log](const ordered_json& j) { log.stream() << j.dump() << '\n' << std::flush; };
}

int train_teacher(const TrainArgs& a) {
  auto cfg = config_or_default(a.config);
  auto l = load_data(a, cfg);
  cfg.teacher_classes = l.manifest.n_classes();
  radt::TrainedSystem ts(cfg, l.manifest.vocabulary, "teacher");
  if (!ts.system.has_teacher())
    throw radt::ConfigError("preset '" + cfg.preset + "' has no teacher; train-teacher needs an hvat or full preset");
  Output log(a.log);
  const auto sum = radt::train_teacher(ts.system, l.data, radt::options_from(cfg), logger(log));
  radt::save_checkpoint(a.out, ts);
  std::cerr << ordered_json{{"checkpoint", a.out}, {"epochs", sum.epochs_run}, {"best_epoch", sum.best_epoch},
                            {"best_val_loss", sum.best_loss}, {"stopped_early", sum.stopped_early}}
                   .dump()
            << '\n';
  return 0;
}

int train_student(const TrainArgs& a) {
  auto cfg = config_or_default(a.config);
  std::optional<radt::TrainedSystem> teacher;
  if (cfg.system(2).use_teacher) {
    if (a.teacher_checkpoint.empty())
      throw UsageError("train-student requires --teacher-checkpoint for preset '" + cfg.preset + "'");
    teacher = radt::load_checkpoint(a.teacher_checkpoint);
    cfg.teacher_classes = teacher->config.teacher_classes;
  }
  auto l = load_data(a, cfg);
  radt::TrainedSystem ts(cfg, l.manifest.vocabulary, "student");
  if (teacher) radt::adopt_teacher(ts.system, *teacher);
  Output log(a.log);
  const auto sum = radt::train_student(ts.system, l.data, radt::options_from(cfg), logger(log));
  radt::save_checkpoint(a.out, ts);
  std::cerr << ordered_json{{"checkpoint", a.out}, {"epochs", sum.epochs_run}, {"best_epoch", sum.best_epoch},
                            {"best_val_loss", sum.best_loss}, {"stopped_early", sum.stopped_early}}
                   .dump()
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string manifest, image_root, checkpoint, predictions, split = "all", out;
  std::vector<std::string> images;
};

bool in_split(const radt::ManifestRow& r, const std::string& split) {
  if (split == "all") return true;
  return (radt::split_of(r) == radt::Split::val) == (split == "val");
}

/// Manifest rows selected by --split, as a manifest of their own.
radt::Manifest select(const radt::Manifest& m, const std::string& split) {
  radt::Manifest out;
  out.vocabulary = m.vocabulary;
  for (const auto& r : m.rows)
    if (in_split(r, split)) out.rows.push_back(r);
  if (out.rows.empty()) throw radt::DataError("no manifest rows in split '" + split + "'");
  return out;
}

std::vector<radt::EvalRecord> records_from_predictions(const radt::Manifest& m, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw radt::DataError("cannot open predictions '" + path + "'");
  std::map<std::string, nlohmann::json> by_path;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      by_path[j.at("image_path").get<std::string>()] = j.at("probs");
    } catch (const nlohmann::json::exception& e) {
      throw radt::DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  std::vector<radt::EvalRecord> recs;
  for (const auto& r : m.rows) {
    auto it = by_path.find(r.image_path);
    if (it == by_path.end()) throw radt::DataError("no prediction for '" + r.image_path + "'");
    radt::EvalRecord rec{m.label_index(r.label), std::vector<double>(m.n_classes(), 0.0)};
    for (const auto& [label, p] : it->second.items()) rec.probs.at(m.label_index(label)) = p.get<double>();
    recs.push_back(std::move(rec));
  }
  return recs;
}

int evaluate(const EvalArgs& a) {
  const auto full = radt::load_manifest(a.manifest);
  const auto m = select(full, a.split);
  std::vector<radt::EvalRecord> recs;
  if (!a.predictions.empty()) {
    recs = records_from_predictions(m, a.predictions);
  } else {
    auto ts = radt::load_checkpoint(a.checkpoint);
    auto d = radt::load_images(m, default_root(a.manifest, a.image_root), ts.config.image_size, ts.config.channels);
    // the checkpoint's vocabulary defines class ids
    radt::Manifest vocab;
    vocab.vocabulary = ts.vocabulary;
    for (std::size_t i = 0; i < m.rows.size(); ++i) d.labels[i] = vocab.label_index(m.rows[i].label);
    recs = radt::predict_records(ts.system, d, ts.config.batch_size);
  }
  auto j = radt::to_json(radt::evaluate_records(recs));
  j["n_samples"] = recs.size();
  Output out(a.out);
  out.stream() << j.dump() << '\n';
  return 0;
}

int predict(const EvalArgs& a) {
  auto ts = radt::load_checkpoint(a.checkpoint);
  if (ts.kind != "student") throw radt::CheckpointError("predict needs a student checkpoint, got a " + ts.kind + " checkpoint");
  std::vector<std::string> paths = a.images;
  std::string root = a.image_root;
  if (!a.manifest.empty()) {
    for (const auto& r : select(radt::load_manifest(a.manifest), a.split).rows) paths.push_back(r.image_path);
    root = default_root(a.manifest, a.image_root);
  }
  if (paths.empty()) throw UsageError("predict needs --manifest or image paths");
  radt::Manifest m;
  m.vocabulary = ts.vocabulary;
  for (const auto& p : paths) m.rows.push_back({p, ts.vocabulary.front(), std::nullopt, std::nullopt});
  const auto d = radt::load_images(m, root, ts.config.image_size, ts.config.channels);
  std::vector<radt::AttentionRegion> regions;
  const auto recs = radt::predict_records(ts.system, d, ts.config.batch_size, &regions);
  Output out(a.out);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    ordered_json j;
    j["image_path"] = paths[i];
    ordered_json probs = ordered_json::object();
    for (std::size_t c = 0; c < recs[i].probs.size(); ++c) probs[ts.vocabulary[c]] = recs[i].probs[c];
    j["probs"] = probs;
    j["predicted"] = ts.vocabulary[radt::argmax(recs[i].probs)];
    const auto& r = regions[i];
    j["region"] = {{"cx", r.cx}, {"cy", r.cy}, {"h", r.h}, {"w", r.w}};
    out.stream() << j.dump() << '\n';
  }
  return 0;
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << ordered_json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global-focal student-teacher training with gaze-derived attention regions"};
  app.require_subcommand(1);

  GazeArgs g;
  auto* pg = app.add_subcommand("preprocess-gaze", "Turn gaze samples into per-image attention regions");
  pg->add_option("--config", g.config, "Run configuration (key = value)");
  pg->add_option("--gaze", g.gaze, "Gaze CSV: image_id,x,y[,timestamp]")->required();
  pg->add_option("--out", g.out, "Region CSV to write (default stdout)");
  pg->add_option("--heatmap-dir", g.heatmap_dir, "Also write quantized heatmaps as PNG here");
  pg->add_option("--manifest", g.manifest, "Read each image's size from this manifest's images");
  pg->add_option("--image-root", g.image_root, "Directory image paths are relative to");
  pg->add_option("--width", g.width, "Image width when no manifest is given");
  pg->add_option("--height", g.height, "Image height when no manifest is given");

  TrainArgs tt;
  auto* pt = app.add_subcommand("train-teacher", "Train the teacher on labels and gaze regions");
  pt->add_option("--config", tt.config, "Run configuration (key = value)");
  pt->add_option("--manifest", tt.manifest, "Manifest CSV with region columns")->required();
  pt->add_option("--image-root", tt.image_root, "Directory image paths are relative to (default: manifest dir)");
  pt->add_option("--regions", tt.regions, "Region CSV from preprocess-gaze, joined on image path");
  pt->add_option("--out", tt.out, "Checkpoint to write")->required();
  pt->add_option("--log", tt.log, "JSON-lines epoch log (default stdout)");

  TrainArgs ts;
  auto* ps = app.add_subcommand("train-student", "Train the student with a pre-trained teacher");
  ps->add_option("--config", ts.config, "Run configuration (key = value)");
  ps->add_option("--manifest", ts.manifest, "Manifest CSV")->required();
  ps->add_option("--image-root", ts.image_root, "Directory image paths are relative to (default: manifest dir)");
  ps->add_option("--teacher-checkpoint", ts.teacher_checkpoint, "Checkpoint written by train-teacher");
  ps->add_option("--out", ts.out, "Checkpoint to write")->required();
  ps->add_option("--log", ts.log, "JSON-lines epoch log (default stdout)");

  EvalArgs ev;
  auto* pe = app.add_subcommand("evaluate", "Classification metrics as JSON");
  pe->add_option("--manifest", ev.manifest, "Manifest CSV with true labels")->required();
  pe->add_option("--image-root", ev.image_root, "Directory image paths are relative to (default: manifest dir)");
  auto* ck = pe->add_option("--checkpoint", ev.checkpoint, "Student checkpoint to run");
  auto* pr = pe->add_option("--predictions", ev.predictions, "Stored predictions (JSON lines from predict)");
  ck->excludes(pr);
  pe->add_option("--split", ev.split, "Rows to score")->check(CLI::IsMember({"all", "train", "val"}));
  pe->add_option("--out", ev.out, "Metrics JSON to write (default stdout)");

  EvalArgs pd;
  auto* pp = app.add_subcommand("predict", "Per-image class probabilities and attention region as JSON lines");
  pp->add_option("--checkpoint", pd.checkpoint, "Student checkpoint")->required();
  pp->add_option("--manifest", pd.manifest, "Manifest whose images to score");
  pp->add_option("--image-root", pd.image_root, "Directory image paths are relative to");
  pp->add_option("--split", pd.split, "Manifest rows to score")->check(CLI::IsMember({"all", "train", "val"}));
  pp->add_option("--out", pd.out, "Output file (default stdout)");
  pp->add_option("images", pd.images, "Image paths");

  auto* sc = app.add_subcommand("config-schema", "Print the JSON schema of the configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*pg) return preprocess_gaze(g);
    if (*pt) return train_teacher(tt);
    if (*ps) return train_student(ts);
    if (*pe) {
      if (ev.checkpoint.empty() == ev.predictions.empty())
        throw UsageError("evaluate needs exactly one of --checkpoint or --predictions");
      return evaluate(ev);
    }
    if (*pp) return predict(pd);
    if (*sc) {
      std::cout << radt::config_schema().dump(2) << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const radt::ConfigError& e) {
    return fail("config", e.what(), 1);
  } catch (const radt::CheckpointError& e) {
    return fail("checkpoint", e.what(), 1);
  } catch (const radt::DataError& e) {
    return fail("data", e.what(), 1);
  } catch (const radt::ImageError& e) {
    return fail("image", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
