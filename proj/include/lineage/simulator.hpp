#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/imagecore.hpp"
#include "lineage/lineage.hpp"

namespace lineage::sim {

/// Cells `cell_a` and `cell_b` (track ids) touch at frame t. Consecutive
/// frames for one pair form a single contact episode.
struct ScriptedCollision {
  int t = 0;
  int cell_a = 0;
  int cell_b = 0;
};

struct ScriptedEvent {
  int t = 0;
  int cell = 0;
};

struct SimConfig {
  int width = 256;
  int height = 256;
  int frames = 20;
  int n_init = 5;
  double radius_min = 8.0;
  double radius_max = 11.0;
  double drift_sigma = 1.5;
  double mitosis_prob = 0.0;
  double apoptosis_prob = 0.0;
  std::vector<ScriptedCollision> collision_script;
  std::vector<ScriptedEvent> mitosis_script;    // daughters appear at t
  std::vector<ScriptedEvent> apoptosis_script;  // fade starts at t
  std::vector<int> entry_script;                // a new cell appears at t
  int fade_frames = 6;
  double noise_sigma = 0.02;
  std::uint64_t rng_seed = 1;

  // Throws std::invalid_argument naming the bad field.
  void validate() const;
};

class ScriptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroundTruth {
  std::vector<LabelMask> masks;  // labels are track ids
  LineageGraph lineage;          // assignments map track id -> track id
  std::vector<Event> events;
};

struct Simulation {
  Sequence sequence;
  GroundTruth truth;
};

/// Renders Gaussian blobs (peak 0.8 over background 0.1, half-peak contour at
/// the cell radius) with Brownian drift, scripted and random events, and
/// additive Gaussian noise. Deterministic in the config; throws ScriptError
/// when a scripted event names a cell that is not alive at its frame.
Simulation simulate(const SimConfig& config);

/// 256x256, T = 20, five cells; cells 1 and 2 touch at t = 8..10, cell 3
/// divides at t = 12, cell 4 starts fading at t = 14.
SimConfig script_collision_scenario(std::uint64_t seed = 1);

SimConfig sim_config_from_json(std::string_view text);
std::string sim_config_to_json(const SimConfig& config);

inline constexpr double kBackground = 0.1;
inline constexpr double kPeak = 0.8;

}  // namespace lineage::sim
