#pragma once

// File formats and loaders. HSEQ is the binary matrix container used
// for features, latent sidecars and anything else matrix-shaped:
//
//   bytes 0..3   magic "HSEQ"
//   bytes 4..7   uint32 LE  T (rows / frames)
//   bytes 8..11  uint32 LE  d (cols)
//   then T*d IEEE-754 float32 LE, row-major
//
// Text formats are one token per line: frame labels and transcripts
// hold class names, ".regimes" holds one integer per line.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hal/core.hpp"

namespace hal::ingest {

using core::FeatureSequence;
using core::Matrix;
using core::Transcript;
using core::require;

struct ClassMap {
  std::vector<std::string> names;  // index = id; background is id 0

  int id_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
  const std::string& name_of(int id) const {
    require(id >= 0 && id < static_cast<int>(names.size()), "ClassMap: id out of range");
    return names[id];
  }
  int size() const { return static_cast<int>(names.size()); }
};

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path.string());
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  out.write("HSEQ", 4);
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      buf[static_cast<size_t>(r) * cols + c] = static_cast<float>(m(r, c));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(out.good(), "short write: " + path.string());
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, "HSEQ", 4) == 0,
          "not a HSEQ file: " + path.string());
  std::uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  require(in.gcount() == 4, "truncated feature file: " + path.string());
  require(rows >= 1 && cols >= 1, "HSEQ with empty shape: " + path.string());
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(static_cast<size_t>(in.gcount()) == buf.size() * sizeof(float),
          "truncated feature file: " + path.string());
  in.peek();
  require(in.eof(), "truncated feature file: trailing bytes in " + path.string());
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      const float v = buf[static_cast<size_t>(r) * cols + c];
      if (!std::isfinite(v))
        throw std::invalid_argument("nonfinite value at (" + std::to_string(r) + "," +
                                    std::to_string(c) + ") in " + path.string());
      m(r, c) = v;
    }
  return m;
}

inline void write_features(const std::filesystem::path& path, const FeatureSequence& fs) {
  write_matrix(path, fs.frames);
}

inline FeatureSequence read_features(const std::filesystem::path& path) {
  return FeatureSequence(read_matrix(path));
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // tolerate one trailing newline; interior blanks are format errors
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (size_t i = 0; i < lines.size(); ++i)
    require(!lines[i].empty(),
            "blank line " + std::to_string(i + 1) + " in " + path.string());
  return lines;
}

inline std::vector<int> read_frame_labels(const std::filesystem::path& path,
                                          const ClassMap& classes) {
  auto lines = read_lines(path);
  require(!lines.empty(), "empty label file: " + path.string());
  std::vector<int> ids;
  ids.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    int id = classes.id_of(lines[i]);
    if (id < 0)
      throw std::invalid_argument("unknown class name '" + lines[i] + "' at line " +
                                  std::to_string(i + 1) + " in " + path.string());
    ids.push_back(id);
  }
  return ids;
}

inline Transcript read_transcript(const std::filesystem::path& path, const ClassMap& classes,
                                  bool allow_repeats = false) {
  auto ids = read_frame_labels(path, classes);
  return Transcript(std::move(ids), allow_repeats);
}

inline void write_names(const std::filesystem::path& path, const std::vector<int>& ids,
                        const ClassMap& classes) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path.string());
  for (int id : ids) out << classes.name_of(id) << "\n";
}

inline void write_regimes(const std::filesystem::path& path, const std::vector<int>& regimes) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path.string());
  for (int r : regimes) out << r << "\n";
}

inline std::vector<int> read_regimes(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  std::vector<int> regimes;
  regimes.reserve(lines.size());
  for (const auto& s : lines) regimes.push_back(std::stoi(s));
  return regimes;
}

inline ClassMap read_class_map(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  require(!lines.empty(), "empty class map: " + path.string());
  std::set<std::string> seen;
  for (const auto& n : lines)
    require(seen.insert(n).second, "duplicate class name '" + n + "' in " + path.string());
  return ClassMap{lines};
}

inline void write_class_map(const std::filesystem::path& path, const ClassMap& classes) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path.string());
  for (const auto& n : classes.names) out << n << "\n";
}

struct IndexEntry {
  std::string video_id;
  std::filesystem::path feature_path;
  std::filesystem::path label_path;
  std::filesystem::path transcript_path;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::string split_name;
  std::vector<IndexEntry> entries;
  ClassMap class_map;
};

// Index file: one entry per line,
//   video_id<TAB>feature_rel_path<TAB>labels_rel_path<TAB>transcript_rel_path
// Relative paths resolve against the index directory; a classes.txt
// beside the index supplies the class map.
inline DatasetIndex load_split(const std::filesystem::path& index_path) {
  const auto dir = index_path.parent_path();
  DatasetIndex idx;
  idx.root = dir;
  idx.split_name = index_path.stem().string();
  idx.class_map = read_class_map(dir / "classes.txt");

  std::ifstream in(index_path);
  require(in.good(), "cannot open: " + index_path.string());
  std::string line;
  std::set<std::string> seen_ids;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    require(fields.size() == 4, "index line " + std::to_string(lineno) +
                                    ": expected 4 tab-separated fields");
    require(seen_ids.insert(fields[0]).second,
            "duplicate video id '" + fields[0] + "' in " + index_path.string());
    IndexEntry e{fields[0], dir / fields[1], dir / fields[2], dir / fields[3]};
    for (const auto& p : {e.feature_path, e.label_path, e.transcript_path})
      require(std::filesystem::exists(p), "missing file referenced by index: " + p.string());
    idx.entries.push_back(std::move(e));
  }
  return idx;
}

inline void write_split_index(const std::filesystem::path& index_path,
                              const std::vector<IndexEntry>& entries) {
  std::ofstream out(index_path);
  require(out.good(), "cannot open for writing: " + index_path.string());
  for (const auto& e : entries)
    out << e.video_id << "\t" << e.feature_path.filename().string() << "\t"
        << e.label_path.filename().string() << "\t" << e.transcript_path.filename().string()
        << "\n";
}

// One loaded sequence with everything the trainer and the checks need.
// Latent sidecars are present only for synthetic data.
struct LoadedSequence {
  std::string video_id;
  FeatureSequence features;
  std::vector<int> gt_labels;
  Transcript transcript;
  std::optional<core::LatentPair> latents;
};

// Frame labels define the ground-truth T. When feature and label
// lengths disagree (a known artifact of released features) the loader
// truncates to the shorter one unless `strict`.
inline LoadedSequence load_sequence(const IndexEntry& e, const ClassMap& classes,
                                    bool strict = false, bool allow_repeats = false) {
  LoadedSequence s;
  s.video_id = e.video_id;
  Matrix feats = read_matrix(e.feature_path);
  auto labels = read_frame_labels(e.label_path, classes);
  if (static_cast<size_t>(feats.rows()) != labels.size()) {
    if (strict)
      throw std::invalid_argument("length mismatch for " + e.video_id + ": features " +
                                  std::to_string(feats.rows()) + " vs labels " +
                                  std::to_string(labels.size()));
    const auto T = std::min<size_t>(feats.rows(), labels.size());
    feats.conservativeResize(static_cast<Eigen::Index>(T), Eigen::NoChange);
    labels.resize(T);
  }
  s.features = FeatureSequence(std::move(feats));
  s.gt_labels = std::move(labels);
  s.transcript = read_transcript(e.transcript_path, classes, allow_repeats);

  const auto vpath = e.feature_path.string() + ".lat.v";
  const auto cpath = e.feature_path.string() + ".lat.c";
  const auto rpath = e.feature_path.string() + ".regimes";
  if (std::filesystem::exists(vpath) && std::filesystem::exists(cpath)) {
    std::optional<std::vector<int>> regimes;
    if (std::filesystem::exists(rpath)) regimes = read_regimes(rpath);
    s.latents = core::LatentPair(read_matrix(vpath), read_matrix(cpath), std::move(regimes));
  }
  return s;
}

// Converter for plain raw float32 dumps (no header, known width).
inline void convert_raw_to_hseq(const std::filesystem::path& raw_path,
                                const std::filesystem::path& out_path, int dim) {
  require(dim >= 1, "convert: dim must be positive");
  std::ifstream in(raw_path, std::ios::binary);
  require(in.good(), "cannot open: " + raw_path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  require(bytes % (sizeof(float) * dim) == 0,
          "raw file size is not a multiple of 4*dim: " + raw_path.string());
  const size_t T = bytes / (sizeof(float) * dim);
  require(T >= 1, "raw file is empty: " + raw_path.string());
  std::vector<float> buf(T * dim);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  Matrix m(T, dim);
  for (size_t r = 0; r < T; ++r)
    for (int c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = buf[r * dim + c];
  write_matrix(out_path, m);
}

}  // namespace hal::ingest
