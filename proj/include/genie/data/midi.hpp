#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "genie/data/sequence.hpp"

namespace genie::data {

// Reads SMF format 0 or 1. Note-ons with velocity > 0 become events, keys
// outside the piano range are dropped, everything else is ignored. Tick times
// follow the merged tempo map of all tracks (120 BPM until the first tempo
// event). Throws ParseError on malformed input.
NoteSequence parse_midi(std::span<const std::uint8_t> bytes, std::string source_id = {});
NoteSequence read_midi_file(const std::string& path);

struct MidiWriteOptions {
  std::uint16_t ticks_per_quarter = 480;
  std::uint32_t microseconds_per_quarter = 500000;
  double note_length_seconds = 0.2;
  std::uint8_t velocity = 80;
};

// Single-track SMF0 rendering of a sequence. Onsets are rounded to the nearest
// tick, so the default settings preserve them to within 1/1920 s.
std::vector<std::uint8_t> write_midi(const NoteSequence& seq, const MidiWriteOptions& options = {});

}  // namespace genie::data
