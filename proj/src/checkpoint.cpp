// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include "hglass/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "json.hpp"

#include "hglass/error.hpp"

namespace hglass {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr const char* kFormat = "hglass-checkpoint-v1";

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n, const std::filesystem::path& path) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw DataError("checkpoint '" + path.string() + "' is truncated");
  }
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void OptimizerState::validate(std::size_t parameter_count) const {
  if (m.size() != parameter_count || v.size() != parameter_count) {
    throw ConfigError("optimizer state has " + std::to_string(m.size()) + "/" + std::to_string(v.size()) +
                      " moments for " + std::to_string(parameter_count) + " parameters");
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const FieldConfig& f = ckpt.field;
  if (ckpt.params.size() != FieldParams::parameter_count(f)) {
    throw ConfigError("checkpoint: parameter vector does not match the field layout");
  }
  if (ckpt.optimizer) ckpt.optimizer->validate(ckpt.params.size());
  nlohmann::json header = {
      {"format", kFormat},
      {"config_hash", hex64(f.layout_hash())},
      {"field",
       {{"depth", f.depth}, {"width", f.width}, {"pos_freqs", f.pos_freqs}, {"dir_freqs", f.dir_freqs},
        {"density_bias_init", f.density_bias_init}}},
      {"parameter_count", ckpt.params.size()},
      {"iteration", ckpt.iteration},
      {"train_hash", hex64(ckpt.train_hash)},
      {"optimizer", ckpt.optimizer.has_value()},
      {"adam_step", ckpt.optimizer ? ckpt.optimizer->step : 0}};

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + tmp.string() + "'");
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    write_doubles(out, ckpt.params);
    if (ckpt.optimizer) {
      write_doubles(out, ckpt.optimizer->m);
      write_doubles(out, ckpt.optimizer->v);
    }
    if (!out) throw DataError("write failed for checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint '" + path.string() + "' has no header");
  Checkpoint ckpt;
  std::size_t count = 0;
  bool has_opt = false;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.at("format").get<std::string>() != kFormat) {
      throw DataError("checkpoint '" + path.string() + "' has unknown format");
    }
    const auto& f = h.at("field");
    ckpt.field.depth = f.at("depth").get<int>();
    ckpt.field.width = f.at("width").get<int>();
    ckpt.field.pos_freqs = f.at("pos_freqs").get<int>();
    ckpt.field.dir_freqs = f.at("dir_freqs").get<int>();
    ckpt.field.density_bias_init = f.value("density_bias_init", 0.0);
    ckpt.field.validate();
    if (h.at("config_hash").get<std::string>() != hex64(ckpt.field.layout_hash())) {
      throw DataError("checkpoint '" + path.string() + "': config hash does not match its field header");
    }
    count = h.at("parameter_count").get<std::size_t>();
    ckpt.iteration = h.at("iteration").get<long long>();
    ckpt.train_hash = std::stoull(h.value("train_hash", std::string("0")), nullptr, 16);
    has_opt = h.value("optimizer", false);
    if (has_opt) {
      ckpt.optimizer = OptimizerState(count);
      ckpt.optimizer->step = h.value("adam_step", 0LL);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' has a malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint '" + path.string() + "': " + e.what());
  }
  if (count != FieldParams::parameter_count(ckpt.field)) {
    throw DataError("checkpoint '" + path.string() + "': parameter count does not match its layout");
  }
  read_doubles(in, ckpt.params, count, path);
  if (has_opt) {
    read_doubles(in, ckpt.optimizer->m, count, path);
    read_doubles(in, ckpt.optimizer->v, count, path);
  }
  return ckpt;
}

FieldParams params_from_checkpoint(const Checkpoint& ckpt, const FieldConfig& expected) {
  if (ckpt.field.layout_hash() != expected.layout_hash()) {
    throw ConfigError("checkpoint layout " + hex64(ckpt.field.layout_hash()) +
                      " does not match the configured field " + hex64(expected.layout_hash()));
  }
  FieldParams p(ckpt.field);
  std::copy(ckpt.params.begin(), ckpt.params.end(), p.flat().begin());
  return p;
}

}  // namespace hglass
