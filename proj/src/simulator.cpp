#include "lineage/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>

#include <fmt/format.h>

#include "json.hpp"

namespace lineage::sim {

namespace {

constexpr double kContactFraction = 0.85;  // center distance / (ra + rb) while touching
constexpr int kSeparationFrames = 2;
constexpr double kApproachSpeed = 1.5;  // px per frame and cell
constexpr double kMinDivisionRadius = 4.0;
constexpr double kMinGap = 5.0;  // initial center spacing in units of radius_max

// mt19937_64 output is fixed by the standard; the distributions are not, so
// uniform and normal draws are derived by hand to stay portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
    return mag * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct SimCell {
  int id = 0;
  double row = 0.0;
  double col = 0.0;
  double radius = 0.0;
  int fade_start = 0;  // 0: not fading
};

struct Episode {
  int a = 0;
  int b = 0;
  int start = 0;  // first approach frame
  int t0 = 0;     // first contact frame
  int t1 = 0;     // last contact frame
};

double fade_factor(const SimCell& c, int t, int fade_frames) {
  if (c.fade_start == 0) return 1.0;
  return 1.0 - static_cast<double>(t - c.fade_start + 1) / fade_frames;
}

class Simulator {
 public:
  explicit Simulator(const SimConfig& config) : cfg_(config), rng_(config.rng_seed) {}

  Simulation run();

 private:
  void place_initial();
  std::pair<double, double> free_position(double radius);
  void build_episodes();
  void apply_events(int t);
  void move(int t);
  void render(int t);
  SimCell* find(int id);
  SimCell& require(int id, int t, const char* what);
  void clamp(SimCell& c) const;
  void reflect_step(SimCell& c, double dr, double dc) const;
  std::vector<int> episode_cells(int t) const;

  SimConfig cfg_;
  Rng rng_;
  std::vector<SimCell> cells_;
  std::vector<Episode> episodes_;
  Simulation out_;
  int next_id_ = 1;
};

void Simulator::clamp(SimCell& c) const {
  c.row = std::clamp(c.row, c.radius, cfg_.height - 1 - c.radius);
  c.col = std::clamp(c.col, c.radius, cfg_.width - 1 - c.radius);
}

void Simulator::reflect_step(SimCell& c, double dr, double dc) const {
  auto reflect = [](double x, double lo, double hi) {
    if (x < lo) x = 2 * lo - x;
    if (x > hi) x = 2 * hi - x;
    return std::clamp(x, lo, hi);
  };
  c.row = reflect(c.row + dr, c.radius, cfg_.height - 1 - c.radius);
  c.col = reflect(c.col + dc, c.radius, cfg_.width - 1 - c.radius);
}

SimCell* Simulator::find(int id) {
  for (SimCell& c : cells_) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

SimCell& Simulator::require(int id, int t, const char* what) {
  SimCell* c = find(id);
  if (c == nullptr) {
    throw ScriptError(std::string(what) + " at t=" + std::to_string(t) + ": cell " + std::to_string(id) +
                      " is not alive");
  }
  return *c;
}

// Rejection sampling; when the scene is too crowded, the candidate farthest
// from its nearest neighbour is taken.
std::pair<double, double> Simulator::free_position(double radius) {
  std::pair<double, double> best{};
  double best_gap = -1.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::pair pos{rng_.uniform(radius, cfg_.height - 1 - radius), rng_.uniform(radius, cfg_.width - 1 - radius)};
    double gap = std::numeric_limits<double>::infinity();
    for (const SimCell& c : cells_) gap = std::min(gap, std::hypot(c.row - pos.first, c.col - pos.second));
    if (gap > best_gap) {
      best = pos;
      best_gap = gap;
    }
    if (gap >= kMinGap * cfg_.radius_max) break;
  }
  return best;
}

// A pair whose first episode steers from frame 2 starts at the distance that
// closes at kApproachSpeed per cell and frame.
void Simulator::place_initial() {
  const double min_gap = kMinGap * cfg_.radius_max;
  for (int i = 0; i < cfg_.n_init; ++i) {
    SimCell c;
    c.id = next_id_++;
    c.radius = rng_.uniform(cfg_.radius_min, cfg_.radius_max);
    const SimCell* partner = nullptr;
    int t0 = 0;
    for (const Episode& e : episodes_) {
      if (e.start != 2 || (e.a != c.id && e.b != c.id)) continue;
      const int other = e.a == c.id ? e.b : e.a;
      if (other < c.id) {
        partner = find(other);
        t0 = e.t0;
      }
      break;
    }
    bool placed = false;
    if (partner != nullptr) {
      const double dist = kContactFraction * (c.radius + partner->radius) + 2.0 * kApproachSpeed * (t0 - 1);
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        const double theta = 2.0 * std::numbers::pi * rng_.uniform();
        c.row = partner->row + dist * std::sin(theta);
        c.col = partner->col + dist * std::cos(theta);
        if (c.row < c.radius || c.row > cfg_.height - 1 - c.radius || c.col < c.radius ||
            c.col > cfg_.width - 1 - c.radius) {
          continue;
        }
        placed = std::all_of(cells_.begin(), cells_.end(), [&](const SimCell& o) {
          return o.id == partner->id || std::hypot(o.row - c.row, o.col - c.col) >= min_gap;
        });
      }
    }
    if (!placed) std::tie(c.row, c.col) = free_position(c.radius);
    cells_.push_back(c);
  }
}

void Simulator::build_episodes() {
  std::vector<ScriptedCollision> script = cfg_.collision_script;
  std::sort(script.begin(), script.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
  for (const ScriptedCollision& s : script) {
    const int a = std::min(s.cell_a, s.cell_b), b = std::max(s.cell_a, s.cell_b);
    auto it = std::find_if(episodes_.begin(), episodes_.end(),
                           [&](const Episode& e) { return e.a == a && e.b == b && e.t1 + 1 == s.t; });
    if (it != episodes_.end()) {
      it->t1 = s.t;
      continue;
    }
    int start = 2;
    for (const Episode& e : episodes_) {
      if (e.a == a || e.b == a || e.a == b || e.b == b) start = std::max(start, e.t1 + kSeparationFrames + 1);
    }
    if (start > s.t) {
      throw ScriptError("collision at t=" + std::to_string(s.t) + " between cells " + std::to_string(a) + " and " +
                        std::to_string(b) + " overlaps an earlier episode");
    }
    episodes_.push_back({a, b, start, s.t, s.t});
  }
}

std::vector<int> Simulator::episode_cells(int t) const {
  std::vector<int> ids;
  for (const Episode& e : episodes_) {
    if (t >= e.start && t <= e.t1 + kSeparationFrames) {
      ids.push_back(e.a);
      ids.push_back(e.b);
    }
  }
  return ids;
}

void Simulator::apply_events(int t) {
  auto& tracks = out_.truth.lineage.tracks;
  auto divide = [&](int id) {
    SimCell parent = require(id, t, "mitosis");
    std::erase_if(cells_, [&](const SimCell& c) { return c.id == id; });
    const double theta = 2.0 * std::numbers::pi * rng_.uniform();
    const double dr = parent.radius * std::sin(theta), dc = parent.radius * std::cos(theta);
    std::vector<int> ids{id};
    for (const double sign : {-1.0, 1.0}) {
      SimCell d;
      d.id = next_id_++;
      d.radius = parent.radius / 2.0;
      d.row = parent.row + sign * dr;
      d.col = parent.col + sign * dc;
      clamp(d);
      cells_.push_back(d);
      tracks.push_back({d.id, t, t, id});
      ids.push_back(d.id);
    }
    out_.truth.events.push_back({t, EventKind::Mitosis, ids});
  };

  // Random events leave alone cells that are steered now or scripted later.
  std::vector<int> steered = episode_cells(t);
  for (const Episode& e : episodes_) {
    if (e.t1 + kSeparationFrames >= t) {
      steered.push_back(e.a);
      steered.push_back(e.b);
    }
  }
  for (const auto* script : {&cfg_.mitosis_script, &cfg_.apoptosis_script}) {
    for (const ScriptedEvent& e : *script) {
      if (e.t >= t) steered.push_back(e.cell);
    }
  }
  auto scripted = [&](int id) { return std::find(steered.begin(), steered.end(), id) != steered.end(); };

  for (const ScriptedEvent& e : cfg_.mitosis_script) {
    if (e.t == t) divide(e.cell);
  }
  for (const ScriptedEvent& e : cfg_.apoptosis_script) {
    if (e.t != t) continue;
    SimCell& c = require(e.cell, t, "apoptosis");
    if (c.fade_start == 0) c.fade_start = t;
  }
  if (cfg_.mitosis_prob > 0.0 || cfg_.apoptosis_prob > 0.0) {
    std::vector<int> ids;
    for (const SimCell& c : cells_) ids.push_back(c.id);
    for (int id : ids) {
      SimCell* c = find(id);
      if (c == nullptr || c->fade_start != 0 || scripted(id)) continue;
      const double u_div = rng_.uniform();
      const double u_die = rng_.uniform();
      if (u_div < cfg_.mitosis_prob && c->radius >= kMinDivisionRadius) {
        divide(id);
      } else if (u_die < cfg_.apoptosis_prob) {
        c->fade_start = t;
      }
    }
  }
  for (int entry_t : cfg_.entry_script) {
    if (entry_t != t) continue;
    SimCell c;
    c.id = next_id_++;
    c.radius = rng_.uniform(cfg_.radius_min, cfg_.radius_max);
    std::tie(c.row, c.col) = free_position(c.radius);
    cells_.push_back(c);
    tracks.push_back({c.id, t, t, 0});
    out_.truth.events.push_back({t, EventKind::New, {c.id}});
  }
  // Fully faded cells leave the scene.
  std::erase_if(cells_, [&](const SimCell& c) { return fade_factor(c, t, cfg_.fade_frames) <= 0.0; });
}

void Simulator::move(int t) {
  std::set<int> handled;
  for (const Episode& e : episodes_) {
    if (t < e.start || t > e.t1 + kSeparationFrames) continue;
    SimCell& a = require(e.a, t, "collision");
    SimCell& b = require(e.b, t, "collision");
    if (handled.contains(a.id) || handled.contains(b.id)) {
      throw ScriptError("collision at t=" + std::to_string(t) + ": cell in two episodes at once");
    }
    handled.insert(a.id);
    handled.insert(b.id);

    double ur = b.row - a.row, uc = b.col - a.col;
    const double len = std::hypot(ur, uc);
    if (len > 0.0) {
      ur /= len;
      uc /= len;
    } else {
      ur = 0.0;
      uc = 1.0;
    }
    const double span = a.radius + b.radius;
    const double contact = kContactFraction * span;
    double mr = (a.row + b.row) / 2.0, mc = (a.col + b.col) / 2.0;
    if (t <= e.t0) {
      const double remaining = e.t0 - t + 1;
      a.row += (mr - ur * contact / 2.0 - a.row) / remaining;
      a.col += (mc - uc * contact / 2.0 - a.col) / remaining;
      b.row += (mr + ur * contact / 2.0 - b.row) / remaining;
      b.col += (mc + uc * contact / 2.0 - b.col) / remaining;
    } else if (t <= e.t1) {
      mr += cfg_.drift_sigma * rng_.normal();
      mc += cfg_.drift_sigma * rng_.normal();
      a.row = mr - ur * contact / 2.0;
      a.col = mc - uc * contact / 2.0;
      b.row = mr + ur * contact / 2.0;
      b.col = mc + uc * contact / 2.0;
    } else {
      const double step = 0.25 * span;
      a.row -= ur * step;
      a.col -= uc * step;
      b.row += ur * step;
      b.col += uc * step;
    }
    clamp(a);
    clamp(b);
  }
  for (SimCell& c : cells_) {
    if (handled.contains(c.id)) continue;
    const double dr = cfg_.drift_sigma * rng_.normal();
    const double dc = cfg_.drift_sigma * rng_.normal();
    reflect_step(c, dr, dc);
  }
  for (const Episode& e : episodes_) {
    if (t >= e.t0 && t <= e.t1) out_.truth.events.push_back({t, EventKind::Collision, {e.a, e.b}});
  }
}

void Simulator::render(int t) {
  const int W = cfg_.width, H = cfg_.height;
  std::vector<double> intensity(static_cast<std::size_t>(W) * H, kBackground);
  std::vector<double> owner_dist(intensity.size(), std::numeric_limits<double>::infinity());
  LabelMask mask(W, H);
  const double amplitude = kPeak - kBackground;

  std::vector<SimCell> order = cells_;
  std::sort(order.begin(), order.end(), [](const SimCell& x, const SimCell& y) { return x.id < y.id; });
  for (const SimCell& c : order) {
    const double f = fade_factor(c, t, cfg_.fade_frames);
    // Half-peak contour at the radius: g(d) = 2^-(d/r)^2.
    const double inv_r2 = 1.0 / (c.radius * c.radius);
    const double reach = 4.0 * c.radius;
    const int r0 = std::max(0, static_cast<int>(std::floor(c.row - reach)));
    const int r1 = std::min(H - 1, static_cast<int>(std::ceil(c.row + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(c.col - reach)));
    const int c1 = std::min(W - 1, static_cast<int>(std::ceil(c.col + reach)));
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        const double d2 = (r - c.row) * (r - c.row) + (col - c.col) * (col - c.col);
        const double g = std::exp2(-d2 * inv_r2);
        const std::size_t i = static_cast<std::size_t>(r) * W + col;
        intensity[i] += amplitude * f * g;
        if (f * g > 0.5 && d2 < owner_dist[i]) {
          owner_dist[i] = d2;
          mask.labels[i] = static_cast<std::uint32_t>(c.id);
        }
      }
    }
  }

  Frame frame(t, W, H);
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    const double v = std::clamp(intensity[i] + cfg_.noise_sigma * rng_.normal(), 0.0, 1.0);
    frame.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  out_.sequence.frames.push_back(std::move(frame));
  out_.truth.masks.push_back(std::move(mask));
}

Simulation Simulator::run() {
  cfg_.validate();
  build_episodes();
  place_initial();
  for (const SimCell& c : cells_) out_.truth.lineage.tracks.push_back({c.id, 1, 1, 0});
  render(1);
  for (int t = 2; t <= cfg_.frames; ++t) {
    apply_events(t);
    move(t);
    render(t);
  }

  // Track extents follow label presence in the rendered masks.
  auto& lineage = out_.truth.lineage;
  std::map<int, std::pair<int, int>> present;
  lineage.assignments.resize(out_.truth.masks.size());
  for (std::size_t i = 0; i < out_.truth.masks.size(); ++i) {
    const int t = static_cast<int>(i) + 1;
    for (std::uint32_t l : std::set<std::uint32_t>(out_.truth.masks[i].labels.begin(), out_.truth.masks[i].labels.end())) {
      if (l == 0) continue;
      const int id = static_cast<int>(l);
      lineage.assignments[i][id] = id;
      auto [it, inserted] = present.emplace(id, std::pair{t, t});
      if (!inserted) it->second.second = t;
    }
  }
  std::vector<Track> tracks;
  for (Track tr : lineage.tracks) {
    const auto it = present.find(tr.id);
    if (it == present.end()) continue;
    tr.end = it->second.second;
    tracks.push_back(tr);
    if (tr.end < cfg_.frames && std::none_of(out_.truth.events.begin(), out_.truth.events.end(), [&](const Event& e) {
          return e.kind == EventKind::Mitosis && e.ids.front() == tr.id;
        })) {
      out_.truth.events.push_back({tr.end + 1, EventKind::Apoptosis, {tr.id}});
    }
  }
  std::sort(tracks.begin(), tracks.end(), [](const Track& x, const Track& y) { return x.id < y.id; });
  lineage.tracks = std::move(tracks);
  std::stable_sort(out_.truth.events.begin(), out_.truth.events.end(),
                   [](const Event& x, const Event& y) { return x.t < y.t; });

  validate_tracks(lineage.tracks);
  validate_against_masks(lineage.tracks, out_.truth.masks);
  return std::move(out_);
}

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("sim config: " + what); };
  if (width < 16 || height < 16) fail("width and height must be at least 16");
  if (frames < 1) fail("frames must be >= 1");
  if (n_init < 0) fail("n_init must be >= 0");
  if (!(radius_min > 0.0) || radius_max < radius_min) fail("radius_range must satisfy 0 < min <= max");
  if (2.0 * radius_max >= std::min(width, height)) fail("radius_range does not fit the image");
  if (!(drift_sigma >= 0.0)) fail("drift_sigma must be >= 0");
  if (!(mitosis_prob >= 0.0 && mitosis_prob <= 1.0)) fail("mitosis_prob must lie in [0, 1]");
  if (!(apoptosis_prob >= 0.0 && apoptosis_prob <= 1.0)) fail("apoptosis_prob must lie in [0, 1]");
  if (fade_frames < 1) fail("fade_frames must be >= 1");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  for (const auto& c : collision_script) {
    if (c.t < 2 || c.t > frames) fail("collision_script frame " + std::to_string(c.t) + " outside 2..frames");
    if (c.cell_a == c.cell_b) fail("collision_script pairs a cell with itself");
  }
  for (const auto& e : mitosis_script) {
    if (e.t < 2 || e.t > frames) fail("mitosis_script frame " + std::to_string(e.t) + " outside 2..frames");
  }
  for (const auto& e : apoptosis_script) {
    if (e.t < 2 || e.t > frames) fail("apoptosis_script frame " + std::to_string(e.t) + " outside 2..frames");
  }
  for (int t : entry_script) {
    if (t < 2 || t > frames) fail("entry_script frame " + std::to_string(t) + " outside 2..frames");
  }
}

Simulation simulate(const SimConfig& config) { return Simulator(config).run(); }

SimConfig script_collision_scenario(std::uint64_t seed) {
  SimConfig c;
  c.width = 256;
  c.height = 256;
  c.frames = 20;
  c.n_init = 5;
  c.collision_script = {{8, 1, 2}, {9, 1, 2}, {10, 1, 2}};
  c.mitosis_script = {{12, 3}};
  c.apoptosis_script = {{14, 4}};
  c.rng_seed = seed;
  return c;
}

SimConfig sim_config_from_json(std::string_view text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("sim config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("sim config: expected a JSON object");
  static const std::set<std::string> known{"width",         "height",         "frames",           "n_init",
                                           "radius_range",  "drift_sigma",    "mitosis_prob",     "apoptosis_prob",
                                           "collision_script", "mitosis_script", "apoptosis_script", "entry_script",
                                           "fade_frames",   "noise_sigma",    "rng_seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("sim config: unknown field '" + key + "'");
  }
  SimConfig c;
  try {
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.frames = j.value("frames", c.frames);
    c.n_init = j.value("n_init", c.n_init);
    if (j.contains("radius_range")) {
      const auto& r = j.at("radius_range");
      if (!r.is_array() || r.size() != 2) throw std::invalid_argument("sim config: radius_range must be [min, max]");
      c.radius_min = r[0].get<double>();
      c.radius_max = r[1].get<double>();
    }
    c.drift_sigma = j.value("drift_sigma", c.drift_sigma);
    c.mitosis_prob = j.value("mitosis_prob", c.mitosis_prob);
    c.apoptosis_prob = j.value("apoptosis_prob", c.apoptosis_prob);
    c.fade_frames = j.value("fade_frames", c.fade_frames);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    // Integer field of entry i in a script array.
    auto field = [&j](const char* script, std::size_t i, const char* key) {
      const json& e = j.at(script).at(i);
      if (!e.is_object() || !e.contains(key) || !e.at(key).is_number_integer()) {
        throw std::invalid_argument(fmt::format("sim config: {}[{}] needs integer '{}'", script, i, key));
      }
      return e.at(key).get<int>();
    };
    for (std::size_t i = 0; i < j.value("collision_script", json::array()).size(); ++i) {
      c.collision_script.push_back({field("collision_script", i, "t"), field("collision_script", i, "cell_a"),
                                    field("collision_script", i, "cell_b")});
    }
    for (std::size_t i = 0; i < j.value("mitosis_script", json::array()).size(); ++i) {
      c.mitosis_script.push_back({field("mitosis_script", i, "t"), field("mitosis_script", i, "cell")});
    }
    for (std::size_t i = 0; i < j.value("apoptosis_script", json::array()).size(); ++i) {
      c.apoptosis_script.push_back({field("apoptosis_script", i, "t"), field("apoptosis_script", i, "cell")});
    }
    for (const auto& e : j.value("entry_script", json::array())) c.entry_script.push_back(e.get<int>());
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("sim config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string sim_config_to_json(const SimConfig& c) {
  using nlohmann::json;
  json j{{"width", c.width},
         {"height", c.height},
         {"frames", c.frames},
         {"n_init", c.n_init},
         {"radius_range", {c.radius_min, c.radius_max}},
         {"drift_sigma", c.drift_sigma},
         {"mitosis_prob", c.mitosis_prob},
         {"apoptosis_prob", c.apoptosis_prob},
         {"fade_frames", c.fade_frames},
         {"noise_sigma", c.noise_sigma},
         {"rng_seed", c.rng_seed}};
  j["collision_script"] = json::array();
  for (const auto& e : c.collision_script) j["collision_script"].push_back({{"t", e.t}, {"cell_a", e.cell_a}, {"cell_b", e.cell_b}});
  j["mitosis_script"] = json::array();
  for (const auto& e : c.mitosis_script) j["mitosis_script"].push_back({{"t", e.t}, {"cell", e.cell}});
  j["apoptosis_script"] = json::array();
  for (const auto& e : c.apoptosis_script) j["apoptosis_script"].push_back({{"t", e.t}, {"cell", e.cell}});
  j["entry_script"] = c.entry_script;
  return j.dump(2) + "\n";
}

}  // namespace lineage::sim
