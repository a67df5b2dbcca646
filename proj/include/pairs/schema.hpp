#pragma once
// Keypoint vocabularies, left/right symmetry, and patch-class enumeration.
//
// A patch class is anchored on an unordered keypoint pair (i, j), i < j.
// Merging symmetry collapses each declared left/right pair to one semantic
// id, so e.g. left-eye__tail and right-eye__tail pool into eye__tail.
// With s distinct semantic ids and p symmetric pairs the merged class count
// is C(s,2) + p: each symmetric pair also yields one legal self class
// (its two members pair with each other, e.g. left-eye__right-eye).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pairs/errors.hpp"

namespace pairs {

using RawPair = std::pair<int, int>;

struct KeypointSchema {
  std::vector<std::string> names;                 // index order
  std::vector<std::pair<int, int>> symmetric_pairs;

  int size() const { return static_cast<int>(names.size()); }
};

inline void validate(const KeypointSchema& schema) {
  std::set<std::string> seen;
  for (const auto& name : schema.names) {
    if (name.empty()) throw InvalidSchemaError("empty keypoint name");
    if (!seen.insert(name).second) {
      throw InvalidSchemaError("duplicate keypoint name: " + name);
    }
  }
  std::set<int> paired;
  for (auto [a, b] : schema.symmetric_pairs) {
    if (a < 0 || b < 0 || a >= schema.size() || b >= schema.size()) {
      throw InvalidSchemaError("symmetric pair index out of range");
    }
    if (a == b) throw InvalidSchemaError("symmetric pair (i,i)");
    if (!paired.insert(a).second || !paired.insert(b).second) {
      throw InvalidSchemaError("keypoint appears in two symmetric pairs");
    }
  }
}

// How merged semantic ids are named. A symmetric pair ("left-eye",
// "right-eye") becomes "eye" once the prefixes strip to a shared suffix;
// when stripping fails the two names are joined, smaller one first.
struct SymmetryNaming {
  std::string left_prefix = "left-";
  std::string right_prefix = "right-";
};

struct PatchClass {
  enum class Kind { Raw, Hybrid };
  Kind kind = Kind::Raw;
  std::string semantic_a;  // Raw: names[i] / names[j]; Hybrid: merged ids
  std::string semantic_b;
  std::vector<RawPair> member_pairs;  // sorted (i, j) pairs, i < j

  std::string label() const { return semantic_a + "__" + semantic_b; }
};

// All unordered pairs (i, j), i < j, in lexicographic order: n(n-1)/2 classes.
inline std::vector<PatchClass> enumerate_raw_pairs(const KeypointSchema& schema) {
  validate(schema);
  std::vector<PatchClass> classes;
  const int n = schema.size();
  classes.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      PatchClass c;
      c.kind = PatchClass::Kind::Raw;
      c.semantic_a = schema.names[i];
      c.semantic_b = schema.names[j];
      c.member_pairs = {{i, j}};
      classes.push_back(std::move(c));
    }
  }
  return classes;
}

namespace detail {

inline std::optional<std::string> strip_prefix(const std::string& s,
                                               const std::string& prefix) {
  if (s.size() > prefix.size() && s.compare(0, prefix.size(), prefix) == 0) {
    return s.substr(prefix.size());
  }
  return std::nullopt;
}

inline std::string merged_semantic_name(const std::string& a, const std::string& b,
                                        const SymmetryNaming& naming) {
  auto la = strip_prefix(a, naming.left_prefix);
  auto rb = strip_prefix(b, naming.right_prefix);
  if (la && rb && *la == *rb) return *la;
  auto ra = strip_prefix(a, naming.right_prefix);
  auto lb = strip_prefix(b, naming.left_prefix);
  if (ra && lb && *ra == *lb) return *ra;
  return std::min(a, b) + "+" + std::max(a, b);
}

}  // namespace detail

// Semantic id of one keypoint: its own name, or the merged name when it
// belongs to a symmetric pair.
inline std::string semantic_id(const KeypointSchema& schema, int index,
                               const SymmetryNaming& naming = {}) {
  for (auto [a, b] : schema.symmetric_pairs) {
    if (index == a || index == b) {
      return detail::merged_semantic_name(schema.names[a], schema.names[b], naming);
    }
  }
  return schema.names.at(static_cast<size_t>(index));
}

// Regroups every member pair by its unordered semantic-id pair. Grouping
// depends only on the pairs, so feeding an already merged class list back
// in reproduces it (merge is idempotent). Classes are ordered by their
// smallest member pair; a class may map a semantic id onto itself
// (left-eye x right-eye), which is the per-pair self class.
inline std::vector<PatchClass> merge_symmetric(const KeypointSchema& schema,
                                               const std::vector<PatchClass>& classes,
                                               const SymmetryNaming& naming = {}) {
  validate(schema);
  std::vector<std::string> sem(static_cast<size_t>(schema.size()));
  for (int i = 0; i < schema.size(); ++i) sem[static_cast<size_t>(i)] = semantic_id(schema, i, naming);

  std::map<std::pair<std::string, std::string>, std::vector<RawPair>> groups;
  for (const auto& c : classes) {
    for (auto [i, j] : c.member_pairs) {
      if (i < 0 || j < 0 || i >= schema.size() || j >= schema.size() || i >= j) {
        throw InvalidSchemaError("member pair out of range for schema");
      }
      auto key = std::minmax(sem[static_cast<size_t>(i)], sem[static_cast<size_t>(j)]);
      groups[key].push_back({i, j});
    }
  }

  std::vector<PatchClass> merged;
  merged.reserve(groups.size());
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    PatchClass h;
    h.kind = PatchClass::Kind::Hybrid;
    h.semantic_a = key.first;
    h.semantic_b = key.second;
    h.member_pairs = std::move(members);
    merged.push_back(std::move(h));
  }
  std::sort(merged.begin(), merged.end(), [](const PatchClass& a, const PatchClass& b) {
    return a.member_pairs.front() < b.member_pairs.front();
  });
  return merged;
}

inline std::vector<PatchClass> merge_symmetric(const KeypointSchema& schema,
                                               const SymmetryNaming& naming = {}) {
  return merge_symmetric(schema, enumerate_raw_pairs(schema), naming);
}

// ---------------------------------------------------------------------------
// Schema files. Two accepted layouts:
//   1. one keypoint name per line, a blank line, then "sym <name1> <name2>"
//      lines declaring symmetric pairs;
//   2. CUB parts/parts.txt: "<id> <name>" with 1-based contiguous ids, with
//      pairs inferred from "left "/"right " name prefixes.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string rstrip_cr(std::string line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  return line;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream iss(s);
  std::vector<std::string> out;
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

inline std::string join_range(const std::vector<std::string>& toks, size_t lo, size_t hi) {
  std::string out;
  for (size_t i = lo; i < hi; ++i) {
    if (i > lo) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace detail

inline KeypointSchema parse_parts_txt(std::istream& is, const std::string& file) {
  std::map<int, std::string> by_id;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    line = detail::rstrip_cr(line);
    if (line.empty()) continue;
    std::istringstream iss(line);
    int id = 0;
    if (!(iss >> id)) throw MalformedLineError(file, line_no, "expected \"<id> <name>\"");
    std::string name;
    std::getline(iss, name);
    size_t start = name.find_first_not_of(" \t");
    if (start == std::string::npos) {
      throw MalformedLineError(file, line_no, "missing keypoint name");
    }
    name = name.substr(start);
    if (!by_id.emplace(id, name).second) {
      throw MalformedLineError(file, line_no, "duplicate part id");
    }
  }
  KeypointSchema schema;
  int expect = 1;
  for (auto& [id, name] : by_id) {
    if (id != expect++) throw InconsistentCountsError(file + ": part ids not 1..n");
    schema.names.push_back(name);
  }
  // Infer left/right pairs; CUB names use a space separator.
  for (int i = 0; i < schema.size(); ++i) {
    for (const char* sep : {" ", "-", "_"}) {
      auto suffix = detail::strip_prefix(schema.names[static_cast<size_t>(i)],
                                         std::string("left") + sep);
      if (!suffix) continue;
      std::string counterpart = std::string("right") + sep + *suffix;
      auto it = std::find(schema.names.begin(), schema.names.end(), counterpart);
      if (it != schema.names.end()) {
        schema.symmetric_pairs.push_back({i, static_cast<int>(it - schema.names.begin())});
      }
    }
  }
  validate(schema);
  return schema;
}

inline KeypointSchema parse_schema(std::istream& is, const std::string& file) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(detail::rstrip_cr(line));

  // parts.txt layout starts with "<number> <name>".
  for (const auto& l : lines) {
    if (l.empty()) continue;
    auto toks = detail::split_ws(l);
    bool numeric = !toks.empty() && toks[0].find_first_not_of("0123456789") == std::string::npos;
    if (numeric && toks.size() >= 2) {
      std::string joined;
      for (const auto& x : lines) joined += x + '\n';
      std::istringstream rejoined(joined);
      return parse_parts_txt(rejoined, file);
    }
    break;
  }

  KeypointSchema schema;
  size_t idx = 0;
  for (; idx < lines.size() && !lines[idx].empty(); ++idx) schema.names.push_back(lines[idx]);
  for (; idx < lines.size(); ++idx) {
    if (lines[idx].empty()) continue;
    auto toks = detail::split_ws(lines[idx]);
    if (toks.empty() || toks[0] != "sym") {
      throw MalformedLineError(file, static_cast<long>(idx + 1), "expected \"sym <name1> <name2>\"");
    }
    // Names may contain spaces; resolve by matching every split of the tail
    // against the declared names.
    std::optional<std::pair<int, int>> found;
    for (size_t cut = 2; cut < toks.size(); ++cut) {
      std::string a = detail::join_range(toks, 1, cut);
      std::string b = detail::join_range(toks, cut, toks.size());
      auto ia = std::find(schema.names.begin(), schema.names.end(), a);
      auto ib = std::find(schema.names.begin(), schema.names.end(), b);
      if (ia != schema.names.end() && ib != schema.names.end()) {
        found = {static_cast<int>(ia - schema.names.begin()),
                 static_cast<int>(ib - schema.names.begin())};
        break;
      }
    }
    if (!found) {
      throw MalformedLineError(file, static_cast<long>(idx + 1), "unknown keypoint names in sym line");
    }
    schema.symmetric_pairs.push_back(*found);
  }
  validate(schema);
  return schema;
}

inline KeypointSchema load_schema(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError(path.string());
  return parse_schema(is, path.filename().string());
}

inline void save_schema(const KeypointSchema& schema, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw MissingFileError(path.string());
  for (const auto& name : schema.names) os << name << '\n';
  os << '\n';
  for (auto [a, b] : schema.symmetric_pairs) {
    os << "sym " << schema.names[static_cast<size_t>(a)] << ' '
       << schema.names[static_cast<size_t>(b)] << '\n';
  }
}

}  // namespace pairs
