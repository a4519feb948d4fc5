#pragma once

// On-disk trajectory datasets.
//
// A dataset is a directory:
//   manifest.json          format tag, version, config echo, cell list
//   cell_bXX_qYY.bin       one file per (beta index, q index) cell
//
// Cell files are little-endian. Header (24 bytes):
//   "HOPC" | u32 version | u32 beta_index | u32 q_index | u32 regime | u32 crc32(previous 20 bytes)
// followed by one block per repetition, in rep order:
//   "HRUN" | u32 rep | u64 seed | u32 first_t | u32 num_records | u32 width(=33)
//   i32 values[num_records * width]            (StatRecord::flatten order)
//   i64 final_num_a | u64 stopping_step | u32 absorbed
//   i32 tau_hh | i32 tau_wp                    (-1 when never reached)
//   u32 homogeneous_hh_vertices | u32 homogeneous_wp_vertices | u32 size_clipped
//   u32 num_components | u32 sizes[num_components]
//   u32 crc32(all preceding bytes of the block)
// Record i of a block has timestep first_t + i.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperop/model.hpp"
#include "hyperop/rng.hpp"
#include "hyperop/statistics.hpp"

namespace hyperop {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kDatasetFormatTag = "hyperop-trajectories";

/// Corrupt, truncated or incompatible dataset content.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

class ByteWriter {
 public:
  void u32(std::uint32_t x) { put(x, 4); }
  void i32(std::int32_t x) { put(static_cast<std::uint32_t>(x), 4); }
  void u64(std::uint64_t x) { put(x, 8); }
  void i64(std::int64_t x) { put(static_cast<std::uint64_t>(x), 8); }
  void tag(const char (&t)[5]) { bytes_.insert(bytes_.end(), t, t + 4); }
  void crc() { u32(crc32_of(bytes_)); }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

 private:
  void put(std::uint64_t x, int width) {
    for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  bool tag(const char (&t)[5]) {
    need(4);
    const bool ok = std::memcmp(bytes_.data() + pos_, t, 4) == 0;
    pos_ += 4;
    return ok;
  }
  /// Reads a trailing crc and checks it against bytes [start, here).
  bool crc_matches(std::size_t start) {
    const auto expected = crc32_of(bytes_.subspan(start, pos_ - start));
    return u32() == expected;
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t k) const {
    if (remaining() < k) throw DatasetError("unexpected end of data");
  }
  std::uint64_t get(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t x = 0;
    for (int i = 0; i < width; ++i) x |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return x;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_{0};
};

/// One stored repetition.
struct RunRecord {
  std::uint32_t rep{0};
  std::uint64_t seed{0};
  std::uint32_t first_t{0};
  std::vector<std::int32_t> values;  // num_records() x kStatWidth, row-major
  RunSummary summary;
  std::uint32_t homogeneous_hh_vertices{0};
  std::uint32_t homogeneous_wp_vertices{0};

  std::size_t num_records() const noexcept { return values.size() / kStatWidth; }
  std::span<const std::int32_t> row(std::size_t i) const {
    return std::span<const std::int32_t>(values).subspan(i * kStatWidth, kStatWidth);
  }
  StatRecord record(std::size_t i) const {
    return StatRecord::unflatten(first_t + static_cast<std::uint32_t>(i), row(i));
  }
  /// The first t rows (the observations available after t timesteps).
  std::span<const std::int32_t> prefix(std::size_t t) const {
    if (t > num_records()) throw std::out_of_range("prefix longer than the stored trajectory");
    return std::span<const std::int32_t>(values).first(t * kStatWidth);
  }

  bool operator==(const RunRecord&) const = default;
};

inline std::vector<std::uint8_t> encode_cell_header(std::uint32_t beta_index, std::uint32_t q_index, Regime regime) {
  ByteWriter w;
  w.tag("HOPC");
  w.u32(kDatasetVersion);
  w.u32(beta_index);
  w.u32(q_index);
  w.u32(static_cast<std::uint32_t>(regime));
  w.crc();
  return w.bytes();
}

inline constexpr std::size_t kCellHeaderBytes = 24;

inline std::vector<std::uint8_t> encode_run(const RunRecord& r) {
  if (r.values.size() % kStatWidth != 0) throw std::invalid_argument("run values are not a whole number of records");
  ByteWriter w;
  w.tag("HRUN");
  w.u32(r.rep);
  w.u64(r.seed);
  w.u32(r.first_t);
  w.u32(static_cast<std::uint32_t>(r.num_records()));
  w.u32(static_cast<std::uint32_t>(kStatWidth));
  for (auto v : r.values) w.i32(v);
  const auto& s = r.summary;
  w.i64(s.final_num_a);
  w.u64(s.stopping_step);
  w.u32(s.absorbed ? 1 : 0);
  w.i32(s.tau_hh ? static_cast<std::int32_t>(*s.tau_hh) : -1);
  w.i32(s.tau_wp ? static_cast<std::int32_t>(*s.tau_wp) : -1);
  w.u32(r.homogeneous_hh_vertices);
  w.u32(r.homogeneous_wp_vertices);
  w.u32(s.size_clipped ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(s.component_sizes.size()));
  for (auto c : s.component_sizes) w.u32(static_cast<std::uint32_t>(c));
  w.crc();
  return w.bytes();
}

/// Decodes one block; n is the vertex count used to rebuild homophily values.
inline RunRecord decode_run(ByteReader& in, std::size_t n) {
  const auto start = in.pos();
  if (!in.tag("HRUN")) throw DatasetError("bad run block tag");
  RunRecord r;
  r.rep = in.u32();
  r.seed = in.u64();
  r.first_t = in.u32();
  const auto records = in.u32();
  const auto width = in.u32();
  if (width != kStatWidth) throw DatasetError("record width " + std::to_string(width) + " != 33");
  if (static_cast<std::uint64_t>(records) * width * 4 > in.remaining()) throw DatasetError("truncated run block");
  r.values.resize(static_cast<std::size_t>(records) * width);
  for (auto& v : r.values) v = in.i32();
  auto& s = r.summary;
  s.final_num_a = in.i64();
  s.stopping_step = in.u64();
  s.absorbed = in.u32() != 0;
  if (const auto t = in.i32(); t >= 0) s.tau_hh = static_cast<std::uint32_t>(t);
  if (const auto t = in.i32(); t >= 0) s.tau_wp = static_cast<std::uint32_t>(t);
  r.homogeneous_hh_vertices = in.u32();
  r.homogeneous_wp_vertices = in.u32();
  s.homophily_hh = static_cast<double>(r.homogeneous_hh_vertices) / static_cast<double>(n);
  s.homophily_wp = static_cast<double>(r.homogeneous_wp_vertices) / static_cast<double>(n);
  s.size_clipped = in.u32() != 0;
  const auto num_components = in.u32();
  if (static_cast<std::uint64_t>(num_components) * 4 > in.remaining()) throw DatasetError("truncated run block");
  s.component_sizes.resize(num_components);
  for (auto& c : s.component_sizes) c = in.u32();
  if (!in.crc_matches(start)) throw DatasetError("checksum mismatch in run block " + std::to_string(r.rep));
  return r;
}

/// Checks the per-record count identities of the 33-dimensional statistic.
inline void validate_record(std::span<const std::int32_t> row, std::size_t num_households, std::size_t num_workplaces) {
  const auto r = StatRecord::unflatten(0, row);
  std::int64_t hh = 0, weighted = 0, dwp = 0, swp = 0;
  for (std::size_t k = 0; k < kHouseholdBins; ++k) {
    hh += r.d_hh[k];
    weighted += static_cast<std::int64_t>(k) * r.d_hh[k];
  }
  for (auto x : r.d_wp) dwp += x;
  for (auto x : r.s_wp) swp += x;
  if (hh != static_cast<std::int64_t>(num_households)) throw DatasetError("D_hh does not sum to the household count");
  if (dwp != static_cast<std::int64_t>(num_workplaces) || swp != static_cast<std::int64_t>(num_workplaces))
    throw DatasetError("D_wp / S_wp do not sum to the workplace count");
  if (weighted != r.num_a) throw DatasetError("N_A differs from the D_hh-weighted sum");
}

inline std::string cell_file_name(std::size_t beta_index, std::size_t q_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cell_b%02zu_q%02zu.bin", beta_index, q_index);
  return buf;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Parses a cell file. With `lenient`, stops at the first damaged or
/// incomplete block and reports how many bytes were valid instead of throwing.
struct CellScan {
  std::vector<RunRecord> runs;
  std::size_t valid_bytes{0};
};

inline CellScan scan_cell(std::span<const std::uint8_t> bytes, std::size_t n, std::uint32_t beta_index,
                          std::uint32_t q_index, Regime regime, bool lenient) {
  CellScan out;
  ByteReader in(bytes);
  {
    if (!in.tag("HOPC")) throw DatasetError("bad cell header tag");
    if (const auto v = in.u32(); v != kDatasetVersion)
      throw DatasetError("dataset version " + std::to_string(v) + " is not supported");
    const auto bi = in.u32(), qi = in.u32(), rg = in.u32();
    if (!in.crc_matches(0)) throw DatasetError("cell header checksum mismatch");
    if (bi != beta_index || qi != q_index || rg != static_cast<std::uint32_t>(regime))
      throw DatasetError("cell header does not match its manifest entry");
  }
  out.valid_bytes = in.pos();
  while (in.remaining() > 0) {
    try {
      auto run = decode_run(in, n);
      if (run.rep != out.runs.size()) throw DatasetError("run blocks out of order");
      out.runs.push_back(std::move(run));
      out.valid_bytes = in.pos();
    } catch (const DatasetError&) {
      if (lenient) break;
      throw;
    }
  }
  return out;
}

/// Per-cell 80/20 train/test partition of repetition indices, stratified by
/// cell and seeded: the reps of cell (bi, qi) are shuffled with
/// derive_seed(split_seed, {bi, qi}) and the first floor(0.8 R) go to training.
struct Split {
  std::size_t num_betas{0}, num_qs{0}, reps{0};
  std::vector<std::uint8_t> is_test;  // [(bi * num_qs + qi) * reps + rep]

  bool test(std::size_t bi, std::size_t qi, std::size_t rep) const {
    return is_test.at((bi * num_qs + qi) * reps + rep) != 0;
  }
  std::size_t train_per_cell() const { return reps * 4 / 5; }
  bool operator==(const Split&) const = default;
};

inline Split make_split(std::size_t num_betas, std::size_t num_qs, std::size_t reps, std::uint64_t split_seed) {
  Split s{num_betas, num_qs, reps, {}};
  if (reps * 4 / 5 == 0 || reps * 4 / 5 == reps)
    throw std::invalid_argument("need at least 2 repetitions per cell for an 80/20 split");
  s.is_test.assign(num_betas * num_qs * reps, 0);
  std::vector<std::size_t> order(reps);
  for (std::size_t bi = 0; bi < num_betas; ++bi)
    for (std::size_t qi = 0; qi < num_qs; ++qi) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng = make_rng(derive_seed(split_seed, {bi, qi}));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = s.train_per_cell(); k < reps; ++k) s.is_test[(bi * num_qs + qi) * reps + order[k]] = 1;
    }
  return s;
}

/// `beta_index,q_index,rep,role` rows with role train|test.
inline void write_split_csv(const Split& s, std::ostream& os) {
  os << "beta_index,q_index,rep,role\n";
  for (std::size_t bi = 0; bi < s.num_betas; ++bi)
    for (std::size_t qi = 0; qi < s.num_qs; ++qi)
      for (std::size_t r = 0; r < s.reps; ++r) os << bi << ',' << qi << ',' << r << ',' << (s.test(bi, qi, r) ? "test" : "train") << '\n';
}

inline Split read_split_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "beta_index,q_index,rep,role") throw DatasetError("bad split manifest header");
  struct Row {
    std::size_t bi, qi, rep;
    bool test;
  };
  std::vector<Row> rows;
  Split s;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Row r{};
    char role[8] = {};
    if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%7s", &r.bi, &r.qi, &r.rep, role) != 4)
      throw DatasetError("bad split manifest row: " + line);
    r.test = std::string(role) == "test";
    s.num_betas = std::max(s.num_betas, r.bi + 1);
    s.num_qs = std::max(s.num_qs, r.qi + 1);
    s.reps = std::max(s.reps, r.rep + 1);
    rows.push_back(r);
  }
  if (rows.size() != s.num_betas * s.num_qs * s.reps) throw DatasetError("split manifest is incomplete");
  s.is_test.assign(rows.size(), 0);
  for (const auto& r : rows) s.is_test[(r.bi * s.num_qs + r.qi) * s.reps + r.rep] = r.test ? 1 : 0;
  return s;
}

}  // namespace hyperop
