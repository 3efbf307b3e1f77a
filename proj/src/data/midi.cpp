#include "genie/data/midi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "genie/error.hpp"

namespace genie::data {
namespace {

constexpr std::uint32_t kDefaultTempo = 500000;  // µs per quarter note, 120 BPM

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::size_t begin, std::size_t end, const char* what)
      : bytes_(bytes), pos_(begin), end_(end), what_(what) {}

  bool done() const { return pos_ >= end_; }
  std::size_t position() const { return pos_; }

  std::uint8_t peek() const {
    need(1);
    return bytes_[pos_];
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] << 8 | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  // Variable-length quantity, at most four bytes.
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = v << 7 | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw ParseError(std::string(what_) + ": variable-length quantity longer than 4 bytes");
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (end_ - std::min(pos_, end_) < n) throw ParseError(std::string(what_) + ": unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t end_;
  const char* what_;
};

struct RawNote {
  std::uint64_t tick;
  int key;
};

void parse_track(ByteReader r, std::vector<RawNote>& notes, std::multimap<std::uint64_t, std::uint32_t>& tempos) {
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  while (!r.done()) {
    tick += r.vlq();
    std::uint8_t status = r.peek();
    if (status & 0x80) {
      r.u8();
    } else {
      if (!running) throw ParseError("track: data byte without running status");
      status = running;
    }

    if (status == 0xFF) {
      const std::uint8_t type = r.u8();
      const std::uint32_t len = r.vlq();
      auto payload = r.take(len);
      if (type == 0x51 && len == 3) {
        const std::uint32_t tempo = payload[0] << 16 | payload[1] << 8 | payload[2];
        if (tempo > 0) tempos.emplace(tick, tempo);
      } else if (type == 0x2F) {
        return;
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      r.skip(r.vlq());
      running = 0;
      continue;
    }
    if (status >= 0xF1) throw ParseError("track: unexpected system message in file");

    running = status;
    const std::uint8_t kind = status & 0xF0;
    const std::uint8_t d1 = r.u8();
    if (kind == 0xC0 || kind == 0xD0) continue;
    const std::uint8_t d2 = r.u8();
    if (kind == 0x90 && d2 > 0) {
      const int key = static_cast<int>(d1 & 0x7F) - kLowestMidiPitch;
      if (key >= 0 && key < kPianoKeys) notes.push_back({tick, key});
    }
  }
}

}  // namespace

NoteSequence parse_midi(std::span<const std::uint8_t> bytes, std::string source_id) {
  static constexpr std::uint8_t kHeaderMagic[] = {'M', 'T', 'h', 'd'};
  static constexpr std::uint8_t kTrackMagic[] = {'M', 'T', 'r', 'k'};
  if (bytes.size() < 4 || !std::equal(std::begin(kHeaderMagic), std::end(kHeaderMagic), bytes.begin()))
    throw ParseError("midi: missing MThd header");

  ByteReader file(bytes, 4, bytes.size(), "midi header");
  const std::uint32_t header_len = file.u32();
  if (header_len < 6) throw ParseError("midi: header chunk too short");
  ByteReader header(bytes, file.position(), file.position() + header_len, "midi header");
  if (file.position() + header_len > bytes.size()) throw ParseError("midi: truncated header chunk");
  const std::uint16_t format = header.u16();
  header.u16();  // declared track count; the chunks themselves are authoritative
  const std::uint16_t division = header.u16();
  if (format > 1) throw ParseError("midi: SMF format " + std::to_string(format) + " is not supported");
  if (division == 0) throw ParseError("midi: zero time division");
  file.skip(header_len);

  std::vector<RawNote> notes;
  std::multimap<std::uint64_t, std::uint32_t> tempos;
  while (!file.done()) {
    auto id = file.take(4);
    const std::uint32_t len = file.u32();
    if (bytes.size() - file.position() < len) throw ParseError("midi: truncated chunk");
    if (std::equal(std::begin(kTrackMagic), std::end(kTrackMagic), id.begin()))
      parse_track(ByteReader(bytes, file.position(), file.position() + len, "midi track"), notes, tempos);
    file.skip(len);
  }

  // seconds per tick under a given tempo
  const bool smpte = division & 0x8000;
  double smpte_seconds_per_tick = 0;
  if (smpte) {
    const int fps = -static_cast<int>(static_cast<std::int8_t>(division >> 8));
    const int ticks_per_frame = division & 0xFF;
    if (fps <= 0 || ticks_per_frame == 0) throw ParseError("midi: invalid SMPTE division");
    const double frames = fps == 29 ? 29.97 : fps;
    smpte_seconds_per_tick = 1.0 / (frames * ticks_per_frame);
  }
  auto seconds_per_tick = [&](std::uint32_t tempo) {
    return smpte ? smpte_seconds_per_tick : tempo * 1e-6 / division;
  };

  // Segment table: tempo changes in tick order; later events at the same tick win.
  struct Segment {
    std::uint64_t tick;
    double seconds;
    double per_tick;
  };
  std::vector<Segment> segments{{0, 0.0, seconds_per_tick(kDefaultTempo)}};
  for (const auto& [tick, tempo] : tempos) {
    Segment& last = segments.back();
    const double at = last.seconds + static_cast<double>(tick - last.tick) * last.per_tick;
    if (tick == last.tick)
      last.per_tick = seconds_per_tick(tempo);
    else
      segments.push_back({tick, at, seconds_per_tick(tempo)});
  }

  NoteSequence seq;
  seq.source_id = std::move(source_id);
  seq.events.reserve(notes.size());
  for (const RawNote& n : notes) {
    auto it = std::upper_bound(segments.begin(), segments.end(), n.tick,
                               [](std::uint64_t t, const Segment& s) { return t < s.tick; });
    const Segment& s = *std::prev(it);
    seq.events.push_back({n.key, s.seconds + static_cast<double>(n.tick - s.tick) * s.per_tick});
  }
  seq.events = flatten_order(std::move(seq.events));
  return seq;
}

NoteSequence read_midi_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_midi(bytes, path);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> write_midi(const NoteSequence& seq, const MidiWriteOptions& options) {
  require(options.ticks_per_quarter > 0 && options.ticks_per_quarter < 0x8000, "write_midi: bad division");
  const double ticks_per_second = options.ticks_per_quarter * 1e6 / options.microseconds_per_quarter;
  struct Message {
    std::uint64_t tick;
    bool on;
    std::uint8_t pitch;
  };
  std::vector<Message> messages;
  for (const Note& note : seq.events) {
    require(note.key >= 0 && note.key < kPianoKeys && note.onset_seconds >= 0, "write_midi: invalid note");
    const auto start = static_cast<std::uint64_t>(std::llround(note.onset_seconds * ticks_per_second));
    const auto length = std::max<std::uint64_t>(1, std::llround(options.note_length_seconds * ticks_per_second));
    const auto pitch = static_cast<std::uint8_t>(note.key + kLowestMidiPitch);
    messages.push_back({start, true, pitch});
    messages.push_back({start + length, false, pitch});
  }
  std::stable_sort(messages.begin(), messages.end(), [](const Message& a, const Message& b) {
    return a.tick != b.tick ? a.tick < b.tick : (!a.on && b.on);
  });

  std::vector<std::uint8_t> track;
  auto put_vlq = [&](std::uint64_t v) {
    std::uint8_t buf[10];
    int n = 0;
    buf[n++] = v & 0x7F;
    while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
    while (n) track.push_back(buf[--n]);
  };
  const std::uint32_t tempo = options.microseconds_per_quarter;
  put_vlq(0);
  track.insert(track.end(), {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(tempo >> 16),
                             static_cast<std::uint8_t>(tempo >> 8), static_cast<std::uint8_t>(tempo)});
  std::uint64_t last = 0;
  bool first = true;
  for (const Message& m : messages) {
    put_vlq(m.tick - last);
    last = m.tick;
    if (first) track.push_back(0x90);  // running status for everything after
    first = false;
    track.push_back(m.pitch);
    track.push_back(m.on ? options.velocity : 0);
  }
  put_vlq(0);
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1,
                                   static_cast<std::uint8_t>(options.ticks_per_quarter >> 8),
                                   static_cast<std::uint8_t>(options.ticks_per_quarter & 0xFF),
                                   'M', 'T', 'r', 'k'};
  const auto len = static_cast<std::uint32_t>(track.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(len >> shift));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

}  // namespace genie::data
