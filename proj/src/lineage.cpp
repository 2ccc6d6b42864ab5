#include "lineage/lineage.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lineage {

const Track* LineageGraph::find(int id) const {
  const auto it = std::lower_bound(tracks.begin(), tracks.end(), id, [](const Track& t, int v) { return t.id < v; });
  return it != tracks.end() && it->id == id ? &*it : nullptr;
}

Track& LineageGraph::at(int id) {
  const auto it = std::lower_bound(tracks.begin(), tracks.end(), id, [](const Track& t, int v) { return t.id < v; });
  if (it == tracks.end() || it->id != id) throw std::out_of_range("no track " + std::to_string(id));
  return *it;
}

int LineageGraph::open_track(int birth, int parent) {
  const int id = next_id();
  tracks.push_back({id, birth, birth, parent});
  return id;
}

int LineageGraph::track_of(int t, int cell_id) const {
  const auto& frame = assignments.at(static_cast<std::size_t>(t - 1));
  const auto it = frame.find(cell_id);
  if (it == frame.end()) throw std::out_of_range("frame " + std::to_string(t) + ": cell " + std::to_string(cell_id) + " has no track");
  return it->second;
}

void validate_tracks(std::span<const Track> tracks) {
  std::map<int, const Track*> by_id;
  for (const Track& t : tracks) {
    const std::string name = "track " + std::to_string(t.id);
    if (t.id <= 0) throw std::invalid_argument(name + ": ids must be positive");
    if (t.birth < 0) throw std::invalid_argument(name + ": negative birth frame");
    if (t.birth > t.end) throw std::invalid_argument(name + ": birth after end");
    if (!by_id.emplace(t.id, &t).second) throw std::invalid_argument(name + ": duplicate id");
  }
  for (const Track& t : tracks) {
    if (t.parent == 0) continue;
    const auto it = by_id.find(t.parent);
    const std::string name = "track " + std::to_string(t.id);
    if (it == by_id.end()) throw std::invalid_argument(name + ": dangling parent " + std::to_string(t.parent));
    if (it->second->end != t.birth - 1) {
      throw std::invalid_argument(name + ": parent " + std::to_string(t.parent) + " does not end at frame " +
                                  std::to_string(t.birth - 1));
    }
  }
}

void validate_against_masks(std::span<const Track> tracks, std::span<const LabelMask> masks) {
  std::map<int, const Track*> by_id;
  for (const Track& t : tracks) by_id.emplace(t.id, &t);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const int t = static_cast<int>(i) + 1;
    std::set<std::uint32_t> seen(masks[i].labels.begin(), masks[i].labels.end());
    for (std::uint32_t label : seen) {
      if (label == 0) continue;
      const auto it = by_id.find(static_cast<int>(label));
      if (it == by_id.end()) {
        throw std::invalid_argument("frame " + std::to_string(t) + ": label " + std::to_string(label) + " has no track");
      }
      if (t < it->second->birth || t > it->second->end) {
        throw std::invalid_argument("frame " + std::to_string(t) + ": label " + std::to_string(label) +
                                    " outside its track interval");
      }
    }
  }
}

std::vector<Track> parse_track_file(std::string_view text) {
  std::vector<Track> out;
  std::vector<int> lines;
  std::map<int, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    std::istringstream fields(line);
    Track t;
    std::string extra;
    if (!(fields >> t.id >> t.birth >> t.end >> t.parent) || (fields >> extra)) {
      throw FormatError(where + ": expected `L B E P`");
    }
    if (t.id <= 0 || t.birth < 0 || t.parent < 0) throw FormatError(where + ": negative or zero field");
    if (t.birth > t.end) throw FormatError(where + ": B > E");
    if (!seen.emplace(t.id, out.size()).second) throw FormatError(where + ": duplicate L " + std::to_string(t.id));
    out.push_back(t);
    lines.push_back(line_no);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Track& t = out[i];
    if (t.parent == 0) continue;
    const std::string where = "line " + std::to_string(lines[i]);
    const auto it = seen.find(t.parent);
    if (it == seen.end()) throw FormatError(where + ": dangling P " + std::to_string(t.parent));
    if (out[it->second].end != t.birth - 1) throw FormatError(where + ": parent does not end at B - 1");
  }
  return out;
}

std::string format_track_file(std::span<const Track> tracks) {
  std::vector<Track> sorted(tracks.begin(), tracks.end());
  std::sort(sorted.begin(), sorted.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  std::string out;
  for (const Track& t : sorted) {
    out += std::to_string(t.id) + ' ' + std::to_string(t.birth) + ' ' + std::to_string(t.end) + ' ' +
           std::to_string(t.parent) + '\n';
  }
  return out;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Collision: return "COLLISION";
    case EventKind::Mitosis: return "MITOSIS";
    case EventKind::Apoptosis: return "APOPTOSIS";
    case EventKind::New: return "NEW";
    case EventKind::MergeUnresolved: return "MERGE_UNRESOLVED";
  }
  return "UNKNOWN";
}

std::string format_events(std::span<const Event> events) {
  std::string out;
  for (const Event& e : events) {
    out += std::to_string(e.t) + ' ' + std::string(to_string(e.kind));
    for (int id : e.ids) out += ' ' + std::to_string(id);
    out += '\n';
  }
  return out;
}

std::vector<Event> parse_events(std::string_view text) {
  static const std::map<std::string, EventKind, std::less<>> kinds{
      {"COLLISION", EventKind::Collision}, {"MITOSIS", EventKind::Mitosis},
      {"APOPTOSIS", EventKind::Apoptosis}, {"NEW", EventKind::New},
      {"MERGE_UNRESOLVED", EventKind::MergeUnresolved}};
  std::vector<Event> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Event e;
    std::string kind;
    if (!(fields >> e.t >> kind)) throw FormatError("event line " + std::to_string(line_no) + ": expected `t EVENT ids...`");
    const auto it = kinds.find(kind);
    if (it == kinds.end()) throw FormatError("event line " + std::to_string(line_no) + ": unknown event " + kind);
    e.kind = it->second;
    int id = 0;
    while (fields >> id) e.ids.push_back(id);
    if (!fields.eof()) throw FormatError("event line " + std::to_string(line_no) + ": bad id");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace lineage
