#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/errors.hpp"
#include "lineage/imagecore.hpp"

namespace lineage {

/// One lineage track: `L B E P` in res_track.txt. parent == 0 means none.
struct Track {
  int id = 0;
  int birth = 0;
  int end = 0;
  int parent = 0;

  friend bool operator==(const Track&, const Track&) = default;
};

using TrackFileRecord = Track;

/// Forest of tracks plus the per-frame cell -> track assignment.
struct LineageGraph {
  std::vector<Track> tracks;                      // ascending id
  std::vector<std::map<int, int>> assignments;    // [t-1]: cell id -> track id

  const Track* find(int id) const;
  Track& at(int id);
  int next_id() const { return tracks.empty() ? 1 : tracks.back().id + 1; }
  int open_track(int birth, int parent);
  int track_of(int t, int cell_id) const;
};

/// Throws std::invalid_argument describing the first violated invariant:
/// positive unique ids, birth <= end, parent exists and ends at birth - 1.
void validate_tracks(std::span<const Track> tracks);

/// Checks that every nonzero label of mask t names a track alive at t.
void validate_against_masks(std::span<const Track> tracks, std::span<const LabelMask> masks);

/// Strict `L B E P` parser; FormatError messages carry the line number.
std::vector<Track> parse_track_file(std::string_view text);

/// One `L B E P\n` line per track, ascending L.
std::string format_track_file(std::span<const Track> tracks);

enum class EventKind { Collision, Mitosis, Apoptosis, New, MergeUnresolved };

std::string_view to_string(EventKind kind);

/// `t EVENT ids...`: ids are track ids.
struct Event {
  int t = 0;
  EventKind kind = EventKind::New;
  std::vector<int> ids;

  friend bool operator==(const Event&, const Event&) = default;
};

std::string format_events(std::span<const Event> events);
std::vector<Event> parse_events(std::string_view text);

}  // namespace lineage
