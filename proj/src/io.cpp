#include "chvar/io.hpp"

#include <fftw3.h>

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace chvar {

using json = nlohmann::json;

namespace {

constexpr const char* kFieldLayout =
    "little-endian 64-bit floats, component-major, row-major axes";
constexpr const char* kNoiseLayout = "little-endian 64-bit floats, mode-major";

// ==== binary payloads ====

double to_little_endian(double x) {
  if constexpr (std::endian::native == std::endian::big)
    return std::bit_cast<double>(__builtin_bswap64(std::bit_cast<uint64_t>(x)));
  else
    return x;
}

void write_doubles(const std::string& path, const std::vector<double>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (double x : v) {
    double le = to_little_endian(x);
    out.write(reinterpret_cast<const char*>(&le), sizeof(le));
  }
  if (!out) throw std::runtime_error("write failed on " + path);
}

std::vector<double> read_doubles(const std::string& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> v(count);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw std::runtime_error(path + " is shorter than its header declares");
  for (double& x : v) x = to_little_endian(x);
  return v;
}

json read_json_file(const std::string& path) {
  return json::parse(read_text_file(path));
}

}  // namespace

// ==== raw files ====

std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed on " + path);
}

std::string content_hash(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ==== field snapshots ====

void write_field_snapshot(const std::string& base, const SpectralField& f,
                          const FieldSnapshotMeta& meta) {
  if (f.empty()) throw std::invalid_argument("cannot persist an empty field");
  json header;
  header["d"] = f.dim();
  header["grid_size"] = f.grid();
  header["time"] = f.time();
  header["equation"] = meta.equation;
  header["nu"] = meta.nu;
  header["layout"] = kFieldLayout;
  write_text_file(base + ".json", header.dump(2) + "\n");
  write_doubles(base + ".bin", synthesize(f));
}

SpectralField read_field_snapshot(const std::string& base,
                                  FieldSnapshotMeta* meta) {
  json header = read_json_file(base + ".json");
  int dim = header.at("d").get<int>();
  int grid = header.at("grid_size").get<int>();
  if (dim < 1 || dim > kMaxDim || grid < 2)
    throw std::runtime_error(base + ".json declares an unusable field shape");
  std::size_t count = static_cast<std::size_t>(dim);
  for (int i = 0; i < dim; ++i) count *= static_cast<std::size_t>(grid);
  std::vector<double> values = read_doubles(base + ".bin", count);
  SpectralField f = analyze(dim, grid, values, header.at("time").get<double>());
  if (meta) {
    meta->equation = header.at("equation").get<std::string>();
    meta->nu = header.at("nu").get<double>();
  }
  return f;
}

// ==== CSV outputs ====

void write_trajectory_csv(const std::string& path,
                          const std::vector<ParticleEnsemble>& trajectory) {
  if (trajectory.empty())
    throw std::invalid_argument("empty trajectory has no rows");
  int dim = trajectory.front().dim;
  std::string text = "t,particle";
  for (int i = 0; i < dim; ++i) text += ",theta" + std::to_string(i + 1);
  text += "\n";
  for (const ParticleEnsemble& snap : trajectory)
    for (int p = 0; p < snap.size(); ++p) {
      text += format_double(snap.time) + "," + std::to_string(p);
      for (int i = 0; i < dim; ++i)
        text += "," + format_double(snap.positions[p][i]);
      text += "\n";
    }
  write_text_file(path, text);
}

void write_energy_csv(const std::string& path,
                      const std::vector<EnergyRow>& rows) {
  std::string text = "t,energy,dissipation,residual\n";
  for (const EnergyRow& r : rows)
    text += format_double(r.t) + "," + format_double(r.energy) + "," +
            format_double(r.dissipation) + "," + format_double(r.residual) +
            "\n";
  write_text_file(path, text);
}

// ==== noise records ====

void write_noise_record(const std::string& base, const NoiseRecord& record,
                        int dim, uint64_t seed) {
  if (record.steps.empty())
    throw std::invalid_argument("noise record holds no steps");
  const std::size_t mode_count = record.steps.front().mode.size();
  const bool translation = record.steps.front().has_translation;
  std::vector<double> flat;
  flat.reserve(record.steps.size() *
               (2 * mode_count + (translation ? dim : 0)));
  for (const NoiseIncrement& inc : record.steps) {
    if (inc.mode.size() != mode_count ||
        inc.has_translation != translation)
      throw std::invalid_argument("noise record steps are not uniform");
    for (const auto& m : inc.mode) {
      flat.push_back(m[0]);
      flat.push_back(m[1]);
    }
    if (translation)
      for (int i = 0; i < dim; ++i) flat.push_back(inc.dy[i]);
  }
  json header;
  header["seed"] = seed;
  header["dt"] = record.dt;
  header["steps"] = record.steps.size();
  header["mode_count"] = mode_count;
  header["dim"] = dim;
  header["translation"] = translation;
  header["layout"] = kNoiseLayout;
  write_text_file(base + ".json", header.dump(2) + "\n");
  write_doubles(base + ".bin", flat);
}

NoiseRecord read_noise_record(const std::string& base, uint64_t* seed) {
  json header = read_json_file(base + ".json");
  const std::size_t steps = header.at("steps").get<std::size_t>();
  const std::size_t mode_count = header.at("mode_count").get<std::size_t>();
  const int dim = header.at("dim").get<int>();
  const bool translation = header.at("translation").get<bool>();
  if (dim < 1 || dim > kMaxDim)
    throw std::runtime_error(base + ".json declares an unusable dimension");
  NoiseRecord record;
  record.dt = header.at("dt").get<double>();
  const std::size_t stride = 2 * mode_count + (translation ? dim : 0);
  std::vector<double> flat = read_doubles(base + ".bin", steps * stride);
  std::size_t pos = 0;
  record.steps.resize(steps);
  for (NoiseIncrement& inc : record.steps) {
    inc.dt = record.dt;
    inc.has_translation = translation;
    inc.mode.resize(mode_count);
    for (auto& m : inc.mode) {
      m[0] = flat[pos++];
      m[1] = flat[pos++];
    }
    if (translation)
      for (int i = 0; i < dim; ++i) inc.dy[i] = flat[pos++];
  }
  if (seed) *seed = header.at("seed").get<uint64_t>();
  return record;
}

// ==== flat configs and manifests ====

std::map<std::string, std::string> load_flat_config(const std::string& path) {
  json cfg = read_json_file(path);
  if (!cfg.is_object())
    throw std::invalid_argument(path + ": config must be a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_string())
      out[key] = value.get<std::string>();
    else if (value.is_boolean())
      out[key] = value.get<bool>() ? "true" : "false";
    else if (value.is_number_unsigned())
      out[key] = std::to_string(value.get<uint64_t>());
    else if (value.is_number_integer())
      out[key] = std::to_string(value.get<int64_t>());
    else if (value.is_number_float())
      out[key] = format_double(value.get<double>());
    else
      throw std::invalid_argument(path + ": config key '" + key +
                                  "' must be a flat scalar");
  }
  return out;
}

void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_text, uint64_t seed,
                    double wall_seconds) {
  json manifest;
  manifest["command"] = command;
  manifest["config_hash"] = content_hash(config_text);
  manifest["seed"] = seed;
  json versions;
  versions["artifact"] = "1.0.0";
  versions["fftw"] = std::string(fftw_version);
  manifest["versions"] = versions;
  manifest["wall_time_seconds"] = wall_seconds;
  write_text_file(path, manifest.dump(2) + "\n");
}

}  // namespace chvar
