#pragma once

// Single-file checkpoint:
//   u64 little-endian header length | UTF-8 JSON header | raw f32 payload
// The header maps tensor names to {dtype, shape, byte_offset} and carries a
// "__metadata__" object (format version, run config, vocabulary, optimizer
// steps, SEMA flags). Tensors are stored in sorted name order, back to back.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "radt/config.hpp"
#include "radt/student_teacher.hpp"

namespace radt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct CheckpointError : Error {
  using Error::Error;
};

inline constexpr int checkpoint_version = 1;

struct CheckpointFile {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

inline std::string encode_checkpoint(const CheckpointFile& f) {
  nlohmann::json header = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : f.tensors) {
    header[name] = {{"dtype", "f32"}, {"shape", t.shape()}, {"byte_offset", offset}};
    offset += t.size() * sizeof(float);
  }
  header["__metadata__"] = f.metadata;
  const std::string text = header.dump();
  std::string out(8, '\0');
  const std::uint64_t n = text.size();
  std::memcpy(out.data(), &n, 8);
  out += text;
  for (const auto& [name, t] : f.tensors)
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  return out;
}

inline CheckpointFile decode_checkpoint(const std::string& bytes, const std::string& source = "checkpoint") {
  auto fail = [&](const std::string& msg) { return CheckpointError(source + ": " + msg); };
  if (bytes.size() < 8) throw fail("truncated header length");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  if (n > bytes.size() - 8) throw fail("header length " + std::to_string(n) + " exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + long(n));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("__metadata__") || !header["__metadata__"].is_object())
    throw fail("header lacks __metadata__");
  CheckpointFile f;
  f.metadata = header["__metadata__"];
  if (f.metadata.value("format_version", -1) != checkpoint_version)
    throw fail("unsupported format version " + f.metadata.value("format_version", nlohmann::json(nullptr)).dump() +
               " (expected " + std::to_string(checkpoint_version) + ")");
  const std::size_t payload = bytes.size() - 8 - n;
  const char* base = bytes.data() + 8 + n;
  std::uint64_t expected = 0;
  for (const auto& [name, e] : header.items()) {
    if (name == "__metadata__") continue;
    try {
      if (e.at("dtype") != "f32") throw fail("tensor '" + name + "' has unsupported dtype " + e.at("dtype").dump());
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("byte_offset").get<std::uint64_t>();
      const std::uint64_t len = numel(shape) * sizeof(float);
      if (offset != expected)
        throw fail("tensor '" + name + "' has byte_offset " + std::to_string(offset) + ", expected " + std::to_string(expected));
      if (offset + len > payload) throw fail("tensor '" + name + "' runs past the end of the payload (truncated file?)");
      Tensor<float> t(shape);
      std::memcpy(t.data(), base + offset, len);
      f.tensors.emplace(name, std::move(t));
      expected = offset + len;
    } catch (const nlohmann::json::exception& ex) {
      throw fail("malformed entry '" + name + "': " + ex.what());
    }
  }
  if (expected != payload) throw fail("payload has " + std::to_string(payload - expected) + " trailing bytes");
  return f;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out.write(bytes.data(), long(bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A trained system together with the configuration and label vocabulary it
/// was built from.
struct TrainedSystem {
  RunConfig config;
  std::vector<std::string> vocabulary;
  std::string kind = "student";  // "teacher" files carry only teacher.* tensors
  StudentTeacher<float> system;

  TrainedSystem() = default;
  TrainedSystem(RunConfig c, std::vector<std::string> vocab, std::string k)
      : config(std::move(c)), vocabulary(std::move(vocab)), kind(std::move(k)),
        system(config.system(vocabulary.size()), config.seed) {}
};

namespace detail {

template <class Module>
void collect_module(Module& m, const std::string& prefix, AdamState& adam, CheckpointFile& f, const char* adam_name) {
  std::size_t i = 0;
  m.visit(prefix, [&](const std::string& name, Tensor<float>& t) {
    f.tensors[name] = t;
    if (!adam.m.empty()) {
      f.tensors[std::string("adam.") + adam_name + ".m." + name] = adam.m.at(i);
      f.tensors[std::string("adam.") + adam_name + ".v." + name] = adam.v.at(i);
    }
    ++i;
  });
  f.metadata["adam"][adam_name] = {{"step", adam.step}, {"has_moments", !adam.m.empty()}};
}

template <class Module>
void restore_module(Module& m, const std::string& prefix, AdamState& adam, const CheckpointFile& f, const char* adam_name) {
  auto take = [&](const std::string& name, Tensor<float>& dst) {
    auto it = f.tensors.find(name);
    if (it == f.tensors.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != dst.shape())
      throw CheckpointError("shape mismatch for '" + name + "': file has " + to_string(it->second.shape()) +
                            ", configuration expects " + to_string(dst.shape()));
    dst = it->second;
  };
  const auto& meta = f.metadata.at("adam").at(adam_name);
  adam = AdamState{};
  adam.step = meta.at("step").get<std::uint64_t>();
  const bool moments = meta.at("has_moments").get<bool>();
  m.visit(prefix, [&](const std::string& name, Tensor<float>& t) {
    take(name, t);
    if (moments) {
      adam.m.push_back(Tensor<float>(t.shape()));
      adam.v.push_back(Tensor<float>(t.shape()));
      take(std::string("adam.") + adam_name + ".m." + name, adam.m.back());
      take(std::string("adam.") + adam_name + ".v." + name, adam.v.back());
    }
  });
}

inline bool wanted(const std::string& kind, const std::string& buffer) {
  return kind != "teacher" || buffer.starts_with("teacher.");
}

}  // namespace detail

inline CheckpointFile to_checkpoint(TrainedSystem& ts) {
  CheckpointFile f;
  auto& sys = ts.system;
  f.metadata["format_version"] = checkpoint_version;
  f.metadata["kind"] = ts.kind;
  f.metadata["config"] = to_json(ts.config);
  f.metadata["vocabulary"] = ts.vocabulary;
  if (ts.kind != "teacher") detail::collect_module(sys.student(), "student", sys.student_adam(), f, "student");
  if (sys.has_teacher()) detail::collect_module(sys.teacher(), "teacher", sys.teacher_adam(), f, "teacher");
  auto sema = nlohmann::json::object();
  sys.visit_buffers([&](const std::string& name, SemaState<float>& s) {
    if (!detail::wanted(ts.kind, name)) return;
    sema[name] = s.initialized;
    if (s.initialized) f.tensors["sema." + name] = s.smoothed;
  });
  f.metadata["sema_initialized"] = sema;
  return f;
}

inline TrainedSystem from_checkpoint(const CheckpointFile& f) {
  TrainedSystem ts;
  try {
    ts = TrainedSystem(config_from_json(f.metadata.at("config")), f.metadata.at("vocabulary").get<std::vector<std::string>>(),
                       f.metadata.at("kind").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid stored config: ") + e.what());
  }
  if (ts.kind != "student" && ts.kind != "teacher") throw CheckpointError("unknown checkpoint kind '" + ts.kind + "'");
  auto& sys = ts.system;
  try {
    if (ts.kind != "teacher") detail::restore_module(sys.student(), "student", sys.student_adam(), f, "student");
    if (sys.has_teacher()) detail::restore_module(sys.teacher(), "teacher", sys.teacher_adam(), f, "teacher");
    const auto& sema = f.metadata.at("sema_initialized");
    sys.visit_buffers([&](const std::string& name, SemaState<float>& s) {
      if (!detail::wanted(ts.kind, name)) return;
      s = SemaState<float>{};
      if (!sema.at(name).get<bool>()) return;
      auto it = f.tensors.find("sema." + name);
      if (it == f.tensors.end()) throw CheckpointError("checkpoint lacks SEMA buffer '" + name + "'");
      s.smoothed = it->second;
      s.initialized = true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed metadata: ") + e.what());
  }
  return ts;
}

inline void save_checkpoint(const std::string& path, TrainedSystem& ts) { write_file(path, encode_checkpoint(to_checkpoint(ts))); }

inline TrainedSystem load_checkpoint(const std::string& path) {
  return from_checkpoint(decode_checkpoint(read_file(path), path));
}

/// Copies a trained teacher (weights, SEMA buffers) into `dst`'s teacher slot.
inline void adopt_teacher(StudentTeacher<float>& dst, TrainedSystem& src) {
  if (!src.system.has_teacher()) throw CheckpointError("teacher checkpoint holds no teacher network");
  if (!dst.has_teacher()) throw CheckpointError("this configuration does not use a teacher");
  std::vector<Tensor<float>*> from;
  src.system.teacher().visit("teacher", [&](const std::string&, Tensor<float>& t) { from.push_back(&t); });
  std::size_t i = 0;
  dst.teacher().visit("teacher", [&](const std::string& name, Tensor<float>& t) {
    if (i >= from.size() || from[i]->shape() != t.shape())
      throw CheckpointError("teacher tensor '" + name + "' does not match the student configuration" +
                            (name.find(".head.cls") != std::string::npos ? " (class-count mismatch)" : ""));
    t = *from[i++];
  });
  std::vector<SemaState<float>*> bufs;
  src.system.teacher().visit_buffers("teacher", [&](const std::string&, SemaState<float>& s) { bufs.push_back(&s); });
  i = 0;
  dst.teacher().visit_buffers("teacher", [&](const std::string&, SemaState<float>& s) { s = *bufs[i++]; });
}

}  // namespace radt
