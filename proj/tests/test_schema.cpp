#include "pairs/schema.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "testutil.hpp"

using namespace pairs;

TEST(SchemaValidate, RejectsBadSchemas) {
  KeypointSchema dup{{"a", "a"}, {}};
  EXPECT_THROW(validate(dup), InvalidSchemaError);
  KeypointSchema empty_name{{"a", ""}, {}};
  EXPECT_THROW(validate(empty_name), InvalidSchemaError);
  KeypointSchema out_of_range{{"a", "b"}, {{0, 2}}};
  EXPECT_THROW(validate(out_of_range), InvalidSchemaError);
  KeypointSchema self_pair{{"a", "b"}, {{1, 1}}};
  EXPECT_THROW(validate(self_pair), InvalidSchemaError);
  KeypointSchema double_pair{{"a", "b", "c"}, {{0, 1}, {1, 2}}};
  EXPECT_THROW(validate(double_pair), InvalidSchemaError);
}

TEST(EnumerateRawPairs, CountsAndOrder) {
  EXPECT_EQ(enumerate_raw_pairs(testutil::cub_schema()).size(), 105u);

  KeypointSchema eleven;
  for (int i = 0; i < 11; ++i) eleven.names.push_back("k" + std::to_string(i));
  EXPECT_EQ(enumerate_raw_pairs(eleven).size(), 55u);

  KeypointSchema two{{"a", "b"}, {}};
  const auto raw = enumerate_raw_pairs(two);
  ASSERT_EQ(raw.size(), 1u);
  EXPECT_EQ(raw[0].member_pairs.front(), (RawPair{0, 1}));
  EXPECT_EQ(raw[0].kind, PatchClass::Kind::Raw);
  EXPECT_EQ(raw[0].label(), "a__b");

  // lexicographic order over (i, j)
  KeypointSchema four{{"a", "b", "c", "d"}, {}};
  const auto pairs4 = enumerate_raw_pairs(four);
  std::vector<RawPair> expected{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  for (size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(pairs4[i].member_pairs.front(), expected[i]);
  }
}

TEST(MergeSymmetric, CubReducesTo69) {
  const KeypointSchema schema = testutil::cub_schema();
  const auto raw = enumerate_raw_pairs(schema);
  const auto hybrid = merge_symmetric(schema, raw);
  EXPECT_EQ(hybrid.size(), 69u);

  size_t members = 0;
  for (const auto& h : hybrid) members += h.member_pairs.size();
  EXPECT_EQ(members, 105u);

  // eye__tail pools left-eye__tail and right-eye__tail
  bool found = false;
  for (const auto& h : hybrid) {
    if (h.label() == "eye__tail") {
      found = true;
      EXPECT_EQ(h.member_pairs, (std::vector<RawPair>{{6, 13}, {10, 13}}));
    }
  }
  EXPECT_TRUE(found);
}

TEST(MergeSymmetric, NoPairsIsIdentity) {
  KeypointSchema schema{{"a", "b", "c"}, {}};
  const auto raw = enumerate_raw_pairs(schema);
  const auto hybrid = merge_symmetric(schema, raw);
  ASSERT_EQ(hybrid.size(), raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    EXPECT_EQ(hybrid[i].member_pairs, raw[i].member_pairs);
    EXPECT_EQ(hybrid[i].label(), raw[i].label());
  }
}

TEST(MergeSymmetric, FourKeypointExample) {
  // {A, L, R, B} with (L, R) symmetric: 6 raw pairs -> 4 hybrid classes,
  // and the self class holds only the raw (L, R) pair.
  KeypointSchema schema{{"A", "L", "R", "B"}, {{1, 2}}};
  const auto hybrid = merge_symmetric(schema, enumerate_raw_pairs(schema));
  ASSERT_EQ(hybrid.size(), 4u);
  const PatchClass* self = nullptr;
  for (const auto& h : hybrid) {
    if (h.semantic_a == h.semantic_b) {
      ASSERT_EQ(self, nullptr);
      self = &h;
    }
  }
  ASSERT_NE(self, nullptr);
  EXPECT_EQ(self->member_pairs, (std::vector<RawPair>{{1, 2}}));
  EXPECT_EQ(self->semantic_a, "L+R");  // no strippable prefix
}

TEST(MergeSymmetric, SemanticNaming) {
  KeypointSchema schema{{"left-eye", "right-eye", "tail"}, {{0, 1}}};
  EXPECT_EQ(semantic_id(schema, 0), "eye");
  EXPECT_EQ(semantic_id(schema, 1), "eye");
  EXPECT_EQ(semantic_id(schema, 2), "tail");

  // space-separated names need the matching prefixes
  KeypointSchema spaced{{"left eye", "right eye"}, {{0, 1}}};
  EXPECT_EQ(semantic_id(spaced, 0), "left eye+right eye");
  EXPECT_EQ(semantic_id(spaced, 0, SymmetryNaming{"left ", "right "}), "eye");
}

TEST(MergeSymmetric, Idempotent) {
  const KeypointSchema schema = testutil::cub_schema();
  const auto once = merge_symmetric(schema, enumerate_raw_pairs(schema));
  const auto twice = merge_symmetric(schema, once);
  ASSERT_EQ(once.size(), twice.size());
  for (size_t i = 0; i < once.size(); ++i) {
    EXPECT_EQ(once[i].label(), twice[i].label());
    EXPECT_EQ(once[i].member_pairs, twice[i].member_pairs);
  }
}

TEST(MergeSymmetric, PartitionAndCountProperties) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    KeypointSchema schema;
    const int n = 2 + static_cast<int>(rng() % 11);
    for (int i = 0; i < n; ++i) schema.names.push_back("kp" + std::to_string(i));
    std::vector<int> free;
    for (int i = 0; i < n; ++i) free.push_back(i);
    std::shuffle(free.begin(), free.end(), rng);
    const int max_pairs = static_cast<int>(rng() % (n / 2 + 1));
    for (int p = 0; p < max_pairs; ++p) {
      const int a = free[static_cast<size_t>(2 * p)];
      const int b = free[static_cast<size_t>(2 * p + 1)];
      schema.symmetric_pairs.push_back({a, b});
    }

    const auto raw = enumerate_raw_pairs(schema);
    const auto hybrid = merge_symmetric(schema, raw);

    // every raw pair lands in exactly one hybrid class
    std::set<RawPair> seen;
    for (const auto& h : hybrid) {
      for (const auto& mp : h.member_pairs) EXPECT_TRUE(seen.insert(mp).second);
    }
    EXPECT_EQ(seen.size(), raw.size());

    // class count = C(s,2) + p
    std::set<std::string> ids;
    for (int i = 0; i < n; ++i) ids.insert(semantic_id(schema, i));
    const long s = static_cast<long>(ids.size());
    const long expected = s * (s - 1) / 2 + static_cast<long>(schema.symmetric_pairs.size());
    EXPECT_EQ(static_cast<long>(hybrid.size()), expected);
  }
}

TEST(SchemaFile, SaveLoadRoundTrip) {
  testutil::TempDir tmp;
  const KeypointSchema schema = testutil::cub_schema();
  save_schema(schema, tmp / "schema.txt");
  const KeypointSchema loaded = load_schema(tmp / "schema.txt");
  EXPECT_EQ(loaded.names, schema.names);
  EXPECT_EQ(loaded.symmetric_pairs, schema.symmetric_pairs);
}

TEST(SchemaFile, PartsTxtWithInferredPairs) {
  testutil::TempDir tmp;
  {
    std::ofstream os(tmp / "parts.txt");
    os << "1 back\n2 beak\n3 left eye\n4 left leg\n5 right eye\n6 right leg\n7 tail\n";
  }
  const KeypointSchema schema = load_schema(tmp / "parts.txt");
  ASSERT_EQ(schema.size(), 7);
  EXPECT_EQ(schema.names[2], "left eye");
  EXPECT_EQ(schema.symmetric_pairs,
            (std::vector<std::pair<int, int>>{{2, 4}, {3, 5}}));
}

TEST(SchemaFile, SymLinesWithSpacedNames) {
  testutil::TempDir tmp;
  {
    std::ofstream os(tmp / "schema.txt");
    os << "beak\nleft eye\nright eye\ntail\n\nsym left eye right eye\n";
  }
  const KeypointSchema schema = load_schema(tmp / "schema.txt");
  EXPECT_EQ(schema.symmetric_pairs, (std::vector<std::pair<int, int>>{{1, 2}}));
}

TEST(SchemaFile, Errors) {
  testutil::TempDir tmp;
  EXPECT_THROW(load_schema(tmp / "nope.txt"), MissingFileError);
  {
    std::ofstream os(tmp / "bad_sym.txt");
    os << "a\nb\n\nsym a nosuch\n";
  }
  EXPECT_THROW(load_schema(tmp / "bad_sym.txt"), MalformedLineError);
  {
    std::ofstream os(tmp / "bad_ids.txt");
    os << "1 a\n3 b\n";
  }
  EXPECT_THROW(load_schema(tmp / "bad_ids.txt"), InconsistentCountsError);
  {
    std::ofstream os(tmp / "dup.txt");
    os << "a\na\n";
  }
  EXPECT_THROW(load_schema(tmp / "dup.txt"), InvalidSchemaError);
}
