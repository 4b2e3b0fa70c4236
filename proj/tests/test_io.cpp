#include "chvar/io.hpp"

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "chvar/fourier_basis.hpp"
#include "doctest.h"

using namespace chvar;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct ScratchDir {
  fs::path path;
  ScratchDir() {
    path = fs::temp_directory_path() /
           ("chvar_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

double max_coef_gap(const SpectralField& a, const SpectralField& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i)
    worst = std::max(worst, std::abs(a.raw()[i] - b.raw()[i]));
  return worst;
}

}  // namespace

// ==== numeric text ====

TEST_CASE("format_double round trips exactly") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0, -0.125,
                   0.80406757023084661}) {
    std::string s = format_double(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(-3.0) == "-3");
}

TEST_CASE("content hash matches the reference vectors") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("chvar") != content_hash("chvar "));
}

// ==== field snapshots ====

TEST_CASE("field snapshot round trip preserves coefficients and metadata") {
  ScratchDir dir;
  SpectralField f = random_divfree_field(2, 16, 3, 0.7, 9);
  f.set_time(0.37);
  write_field_snapshot(dir.file("snap"), f, {"ch", 0.05});

  FieldSnapshotMeta meta;
  SpectralField g = read_field_snapshot(dir.file("snap"), &meta);
  CHECK(g.dim() == 2);
  CHECK(g.grid() == 16);
  CHECK(g.time() == 0.37);
  CHECK(meta.equation == "ch");
  CHECK(meta.nu == 0.05);
  CHECK(max_coef_gap(f, g) < 1e-13);

  // same bytes on a rewrite
  write_field_snapshot(dir.file("snap2"), f, {"ch", 0.05});
  CHECK(read_text_file(dir.file("snap.bin")) ==
        read_text_file(dir.file("snap2.bin")));
  CHECK(read_text_file(dir.file("snap.json")) ==
        read_text_file(dir.file("snap2.json")));
}

TEST_CASE("truncated snapshot payloads are rejected") {
  ScratchDir dir;
  SpectralField f(1, 8);
  std::vector<int> k{1};
  f.at(0, k) = Complex(0.5, 0.0);
  f.at(0, std::vector<int>{-1}) = Complex(0.5, 0.0);
  write_field_snapshot(dir.file("snap"), f, {"ch1d", 0.0});
  std::string bin = read_text_file(dir.file("snap.bin"));
  write_text_file(dir.file("snap.bin"), bin.substr(0, bin.size() - 8));
  CHECK_THROWS_AS(read_field_snapshot(dir.file("snap")), std::runtime_error);
}

// ==== CSV ====

TEST_CASE("trajectory csv lists one row per particle and snapshot") {
  ScratchDir dir;
  std::vector<ParticleEnsemble> traj(2);
  for (int s = 0; s < 2; ++s) {
    traj[s].dim = 2;
    traj[s].time = 0.5 * s;
    for (int p = 0; p < 3; ++p) {
      SmallVec x = zero_vec();
      x[0] = 0.25 + p;
      x[1] = 1.0 / 3.0;
      traj[s].positions.push_back(x);
      traj[s].displacement.push_back(zero_vec());
    }
  }
  write_trajectory_csv(dir.file("traj.csv"), traj);
  std::string text = read_text_file(dir.file("traj.csv"));
  CHECK(text.rfind("t,particle,theta1,theta2\n", 0) == 0);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 1 + 2 * 3);
  CHECK(text.find("0.5,2,2.25,") != std::string::npos);

  CHECK_THROWS_AS(write_trajectory_csv(dir.file("x.csv"), {}),
                  std::invalid_argument);
}

// ==== noise records ====

TEST_CASE("noise record round trip is bitwise exact") {
  ScratchDir dir;
  BasisSet basis = build_basis(2, 2, 5.0);
  GaussianStream stream(31);
  NoiseRecord rec;
  rec.dt = 0.01;
  for (int s = 0; s < 5; ++s)
    rec.steps.push_back(sample_increments(basis, 0.01, stream, s, 0));
  write_noise_record(dir.file("noise"), rec, 2, 31);

  uint64_t seed = 0;
  NoiseRecord back = read_noise_record(dir.file("noise"), &seed);
  CHECK(seed == 31);
  CHECK(back.dt == rec.dt);
  REQUIRE(back.steps.size() == rec.steps.size());
  for (std::size_t s = 0; s < rec.steps.size(); ++s) {
    REQUIRE(back.steps[s].mode.size() == rec.steps[s].mode.size());
    CHECK(back.steps[s].has_translation == rec.steps[s].has_translation);
    for (std::size_t m = 0; m < rec.steps[s].mode.size(); ++m) {
      CHECK(back.steps[s].mode[m][0] == rec.steps[s].mode[m][0]);
      CHECK(back.steps[s].mode[m][1] == rec.steps[s].mode[m][1]);
    }
    for (int i = 0; i < 2; ++i)
      CHECK(back.steps[s].dy[i] == rec.steps[s].dy[i]);
  }

  NoiseRecord ragged = rec;
  ragged.steps[2].mode.pop_back();
  CHECK_THROWS_AS(write_noise_record(dir.file("bad"), ragged, 2, 31),
                  std::invalid_argument);
  CHECK_THROWS_AS(write_noise_record(dir.file("bad"), NoiseRecord{}, 2, 31),
                  std::invalid_argument);
}

// ==== configs and manifests ====

TEST_CASE("flat config accepts scalars and rejects nesting") {
  ScratchDir dir;
  write_text_file(dir.file("cfg.json"),
                  "{\"dim\": 2, \"nu\": 0.05, \"equation\": \"ch\", "
                  "\"refine\": true, \"seed\": 98765}\n");
  auto kv = load_flat_config(dir.file("cfg.json"));
  CHECK(kv.at("dim") == "2");
  CHECK(kv.at("nu") == "0.05");
  CHECK(kv.at("equation") == "ch");
  CHECK(kv.at("refine") == "true");
  CHECK(kv.at("seed") == "98765");

  write_text_file(dir.file("nested.json"), "{\"a\": {\"b\": 1}}\n");
  CHECK_THROWS_AS(load_flat_config(dir.file("nested.json")),
                  std::invalid_argument);
  write_text_file(dir.file("arr.json"), "{\"a\": [1, 2]}\n");
  CHECK_THROWS_AS(load_flat_config(dir.file("arr.json")),
                  std::invalid_argument);
  write_text_file(dir.file("list.json"), "[1, 2]\n");
  CHECK_THROWS_AS(load_flat_config(dir.file("list.json")),
                  std::invalid_argument);
}

TEST_CASE("manifest embeds the config hash") {
  ScratchDir dir;
  std::string cfg = "{\"dim\": 2}\n";
  write_manifest(dir.file("manifest.json"), "solve-pde", cfg, 42, 1.25);
  std::string text = read_text_file(dir.file("manifest.json"));
  CHECK(text.find("\"command\": \"solve-pde\"") != std::string::npos);
  CHECK(text.find("\"seed\": 42") != std::string::npos);
  CHECK(text.find(content_hash(cfg)) != std::string::npos);
  CHECK(text.find("wall_time_seconds") != std::string::npos);
}
