#pragma once

// Artifact input and output: field snapshots (JSON header plus little-endian
// binary payload), trajectory and energy CSVs, persisted noise records, flat
// key-value JSON configs, and run manifests. All floating point text uses the
// shortest round-trip form, so identical doubles always serialize to
// identical bytes and reruns with the same seed are byte-reproducible.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chvar/group_brownian.hpp"
#include "chvar/spectral_field.hpp"
#include "chvar/spectral_pde.hpp"

namespace chvar {

// Shortest decimal text that parses back to exactly x.
std::string format_double(double x);

// ==== raw files ====

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// FNV-1a 64-bit content hash, reported as fixed-width hex.
std::string content_hash(const std::string& bytes);

// ==== field snapshots ====

struct FieldSnapshotMeta {
  std::string equation;  // free-form label of the producing model
  double nu = 0.0;
};

// <base>.json holds {d, grid_size, time, equation, nu, layout}; <base>.bin
// holds the real-space samples as little-endian 64-bit floats,
// component-major with row-major axes (first axis slowest).
void write_field_snapshot(const std::string& base, const SpectralField& f,
                          const FieldSnapshotMeta& meta);
SpectralField read_field_snapshot(const std::string& base,
                                  FieldSnapshotMeta* meta = nullptr);

// ==== CSV outputs ====

// Rows t, particle, theta1..theta_d for every snapshot of the trajectory.
void write_trajectory_csv(const std::string& path,
                          const std::vector<ParticleEnsemble>& trajectory);

// Rows t, energy, dissipation, residual.
void write_energy_csv(const std::string& path,
                      const std::vector<EnergyRow>& rows);

// ==== noise records ====

// <base>.json holds {seed, dt, steps, mode_count, dim, translation, layout};
// <base>.bin holds, per step, every mode pair (dx1, dx2) followed by the dim
// translation components when present (mode-major, little-endian doubles).
void write_noise_record(const std::string& base, const NoiseRecord& record,
                        int dim, uint64_t seed);
NoiseRecord read_noise_record(const std::string& base,
                              uint64_t* seed = nullptr);

// ==== flat configs and manifests ====

// Flat key-value JSON (no nesting); values come back as strings suitable for
// seeding command-line defaults. Rejects nested objects and arrays.
std::map<std::string, std::string> load_flat_config(const std::string& path);

// manifest.json: {command, config_hash, seed, versions, wall_time_seconds}.
// Only wall_time_seconds may differ between reruns of the same experiment.
void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_text, uint64_t seed,
                    double wall_seconds);

}  // namespace chvar
