#include "onoff/corpus.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace onoff {

const std::array<Task, kNumTasks>& all_tasks() {
  static const std::array<Task, kNumTasks> tasks = {
      Task::A,    Task::MPT,       Task::DDK,  Task::WORDS, Task::SENT,
      Task::PROS_SENT, Task::TEXT, Task::FROG, Task::CONVERS};
  return tasks;
}

std::string to_token(Task t) {
  switch (t) {
    case Task::A: return "A";
    case Task::MPT: return "MPT";
    case Task::DDK: return "DDK";
    case Task::WORDS: return "WORDS";
    case Task::SENT: return "SENT";
    case Task::PROS_SENT: return "PROS-SENT";
    case Task::TEXT: return "TEXT";
    case Task::FROG: return "FROG";
    case Task::CONVERS: return "CONVERS";
  }
  throw InvalidArgumentError("invalid Task value");
}

std::string to_token(Gender g) { return g == Gender::Male ? "M" : "F"; }

std::string to_token(State s) { return s == State::ON ? "ON" : "OFF"; }

Task task_from_token(const std::string& tok) {
  for (Task t : all_tasks()) {
    if (to_token(t) == tok) return t;
  }
  throw ParseError("unknown task token '" + tok + "'");
}

Gender gender_from_token(const std::string& tok) {
  if (tok == "M") return Gender::Male;
  if (tok == "F") return Gender::Female;
  throw ParseError("unknown gender token '" + tok + "'");
}

State state_from_token(const std::string& tok) {
  if (tok == "ON") return State::ON;
  if (tok == "OFF") return State::OFF;
  throw ParseError("unknown state token '" + tok + "'");
}

void validate(const FrameFeatures& m) {
  if (m.values.rows() < 1 || m.values.cols() < 1) {
    throw EmptyInputError("feature matrix must be at least 1x1");
  }
  if (!(m.frame_period_ms > 0.0)) {
    throw InvalidArgumentError("frame_period_ms must be positive");
  }
  for (long r = 0; r < m.values.rows(); ++r) {
    for (long c = 0; c < m.values.cols(); ++c) {
      if (!std::isfinite(m.values(r, c))) {
        throw NonFiniteError("non-finite feature value at row " +
                             std::to_string(r) + ", col " + std::to_string(c));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());

  std::vector<SampleRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    const auto fields = split_tabs(line);
    if (fields.size() != 6) {
      throw ParseError("expected 6 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    SampleRecord r;
    r.sample_id = fields[0];
    r.speaker_id = fields[1];
    if (r.sample_id.empty() || r.speaker_id.empty()) {
      throw ParseError("empty sample_id or speaker_id", line_no);
    }
    try {
      r.gender = gender_from_token(fields[2]);
      r.task = task_from_token(fields[3]);
      r.state = state_from_token(fields[4]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    r.feature_path = fields[5];
    if (!seen_ids.insert(r.sample_id).second) {
      throw DuplicateIdError("duplicate sample_id '" + r.sample_id + "' at line " +
                             std::to_string(line_no));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::string manifest_line(const SampleRecord& r) {
  return r.sample_id + '\t' + r.speaker_id + '\t' + to_token(r.gender) + '\t' +
         to_token(r.task) + '\t' + to_token(r.state) + '\t' + r.feature_path;
}

void save_manifest(const std::filesystem::path& path,
                   const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + path.string());
  for (const auto& r : records) out << manifest_line(r) << '\n';
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

// ---------------------------------------------------------------------------
// Feature matrix I/O

namespace {

constexpr char kFmatMagic[4] = {'F', 'M', 'A', 'T'};
constexpr std::uint32_t kFmatVersion = 1;

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f64le(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

FrameFeatures read_fmat(const std::filesystem::path& path,
                        const std::string& bytes) {
  constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 4 + 8;
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kFmatMagic, 4) != 0) {
    throw BadMagicError("not an FMAT file: " + path.string());
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = get_u32le(p + 4);
  if (version != kFmatVersion) {
    throw ParseError("unsupported FMAT version " + std::to_string(version) +
                     " in " + path.string());
  }
  const std::uint32_t t = get_u32le(p + 8);
  const std::uint32_t d = get_u32le(p + 12);
  if (t < 1 || d < 1) {
    throw DimensionMismatchError("FMAT header declares empty matrix in " +
                                 path.string());
  }
  const double period = get_f64le(p + 16);

  const std::size_t expected =
      kHeaderSize + static_cast<std::size_t>(t) * d * 8;
  if (bytes.size() != expected) {
    throw DimensionMismatchError(
        "FMAT payload size mismatch in " + path.string() + ": expected " +
        std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }

  FrameFeatures m;
  m.frame_period_ms = period;
  m.values.resize(t, d);
  const unsigned char* q = p + kHeaderSize;
  for (std::uint32_t r = 0; r < t; ++r) {
    for (std::uint32_t c = 0; c < d; ++c, q += 8) {
      const double v = get_f64le(q);
      if (!std::isfinite(v)) {
        throw NonFiniteError("non-finite value at row " + std::to_string(r) +
                             ", col " + std::to_string(c) + " in " +
                             path.string());
      }
      m.values(r, c) = v;
    }
  }
  if (!(m.frame_period_ms > 0.0)) {
    throw ParseError("non-positive frame_period_ms in " + path.string());
  }
  return m;
}

FrameFeatures read_csv(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };

  auto parse_fields = [&](long expected) {
    std::vector<double> vals;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t pos = line.find(',', start);
      if (pos == std::string::npos) pos = line.size();
      const std::string cell = line.substr(start, pos - start);
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("bad numeric cell '" + cell + "' in " + path.string(),
                         line_no);
      }
      start = pos + 1;
      if (pos == line.size()) break;
    }
    if (expected >= 0 && static_cast<long>(vals.size()) != expected) {
      throw DimensionMismatchError("expected " + std::to_string(expected) +
                                   " values, got " + std::to_string(vals.size()) +
                                   " at line " + std::to_string(line_no) +
                                   " in " + path.string());
    }
    return vals;
  };

  if (!next_line()) throw ParseError("empty CSV feature file: " + path.string());
  const auto header = parse_fields(3);
  const long t = static_cast<long>(header[0]);
  const long d = static_cast<long>(header[1]);
  if (t < 1 || d < 1 || header[0] != t || header[1] != d) {
    throw DimensionMismatchError("bad CSV header dimensions in " + path.string());
  }

  FrameFeatures m;
  m.frame_period_ms = header[2];
  if (!(m.frame_period_ms > 0.0)) {
    throw ParseError("non-positive frame_period_ms in " + path.string());
  }
  m.values.resize(t, d);
  for (long r = 0; r < t; ++r) {
    if (!next_line()) {
      throw DimensionMismatchError("CSV declares " + std::to_string(t) +
                                   " rows but has " + std::to_string(r) +
                                   " in " + path.string());
    }
    const auto row = parse_fields(d);
    for (long c = 0; c < d; ++c) {
      if (!std::isfinite(row[c])) {
        throw NonFiniteError("non-finite value at row " + std::to_string(r) +
                             ", col " + std::to_string(c) + " in " +
                             path.string());
      }
      m.values(r, c) = row[c];
    }
  }
  if (next_line()) {
    throw DimensionMismatchError("trailing rows beyond declared T in " +
                                 path.string());
  }
  return m;
}

}  // namespace

FrameFeatures read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  const bool has_magic =
      bytes.size() >= 4 && std::memcmp(bytes.data(), kFmatMagic, 4) == 0;
  if (has_magic) return read_fmat(path, bytes);
  if (path.extension() == ".fmat") {
    // extension promises binary; a wrong magic is a corrupt file, not CSV
    throw BadMagicError("bad magic in " + path.string());
  }
  return read_csv(path, bytes);
}

void write_feature_matrix(const std::filesystem::path& path,
                          const FrameFeatures& m) {
  validate(m);
  std::string buf;
  const std::size_t t = static_cast<std::size_t>(m.values.rows());
  const std::size_t d = static_cast<std::size_t>(m.values.cols());
  buf.reserve(24 + t * d * 8);
  buf.append(kFmatMagic, 4);
  put_u32le(buf, kFmatVersion);
  put_u32le(buf, static_cast<std::uint32_t>(t));
  put_u32le(buf, static_cast<std::uint32_t>(d));
  put_f64le(buf, m.frame_period_ms);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      put_f64le(buf, m.values(static_cast<long>(r), static_cast<long>(c)));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace onoff
