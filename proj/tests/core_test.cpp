#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fastvis/core.hpp"

namespace fastvis {
namespace {

// Per-pixel rasterization of a box; independent of the run-length builder.
std::vector<std::uint8_t> rasterize(const BBox& b) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(b.image_w()) * b.image_h(), 0);
  for (int y = 0; y < b.image_h(); ++y) {
    for (int x = 0; x < b.image_w(); ++x) {
      if (x >= b.x0() && x < b.x1() && y >= b.y0() && y < b.y1()) px[y * b.image_w() + x] = 1;
    }
  }
  return px;
}

BBox random_box(std::mt19937_64& rng) {
  const int W = 1 + static_cast<int>(rng() % 48), H = 1 + static_cast<int>(rng() % 48);
  const int x0 = static_cast<int>(rng() % W), y0 = static_cast<int>(rng() % H);
  const int x1 = x0 + 1 + static_cast<int>(rng() % (W - x0));
  const int y1 = y0 + 1 + static_cast<int>(rng() % (H - y0));
  return BBox(x0, y0, x1, y1, W, H);
}

TEST(MaskFromBBox, SmallBoxInFourByFour) {
  const Mask m = mask_from_bbox(BBox(0, 0, 2, 2, 4, 4));
  EXPECT_EQ(m.area(), 4u);
  std::uint64_t sum = 0;
  for (auto r : m.rle()) sum += r;
  EXPECT_EQ(sum, 16u);
  EXPECT_EQ(m.rle(), (std::vector<std::uint32_t>{0, 2, 2, 2, 10}));
}

TEST(MaskFromBBox, FullImageIsAllOnes) {
  const Mask m = mask_from_bbox(BBox(0, 0, 7, 5, 7, 5));
  EXPECT_EQ(m.rle(), (std::vector<std::uint32_t>{0, 35}));
}

TEST(MaskFromBBox, MatchesPixelGridOracle) {
  const BBox b(1, 1, 3, 2, 4, 3);
  const Mask m = mask_from_bbox(b);
  const auto bits = m.to_bitmap();
  ASSERT_EQ(bits, rasterize(b));
  std::vector<std::pair<int, int>> set;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      if (bits[y * 4 + x]) set.emplace_back(x, y);
  EXPECT_EQ(set, (std::vector<std::pair<int, int>>{{1, 1}, {2, 1}}));
}

TEST(MaskFromBBox, RandomBoxesAgreeWithRasterization) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 1000; ++i) {
    const BBox b = random_box(rng);
    const Mask m = mask_from_bbox(b);
    ASSERT_EQ(m.to_bitmap(), rasterize(b)) << "box " << i;
    ASSERT_EQ(m.area(), static_cast<std::uint64_t>(b.area()));
    ASSERT_EQ(Mask::from_bitmap(b.image_w(), b.image_h(), m.to_bitmap()), m);
  }
}

TEST(Mask, BitmapRoundTripIsCanonical) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const int w = 1 + static_cast<int>(rng() % 20), h = 1 + static_cast<int>(rng() % 20);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h);
    for (auto& b : bits) b = (rng() % 3 == 0);
    const Mask m = Mask::from_bitmap(w, h, bits);
    ASSERT_EQ(m.to_bitmap(), bits);
    for (std::size_t k = 1; k < m.rle().size(); ++k) ASSERT_GT(m.rle()[k], 0u);
  }
}

TEST(Mask, RejectsInvalidEncodings) {
  EXPECT_THROW(Mask(2, 2, {1, 2}), GeometryError);          // sums to 3
  EXPECT_THROW(Mask(2, 2, {2, 0, 2}), GeometryError);       // interior zero run
  EXPECT_THROW(Mask(0, 2, {0}), GeometryError);
  EXPECT_THROW(Mask(2, 2, {}), GeometryError);
  EXPECT_NO_THROW(Mask(2, 2, {0, 4}));
  EXPECT_NO_THROW(Mask(2, 2, {4}));
}

TEST(Region, ConstructorEnforcesOrderingAndRange) {
  EXPECT_THROW(Region(0.8, 0.2, 0.1, 0.5), GeometryError);
  EXPECT_THROW(Region(0.2, 0.8, 0.5, 0.5), GeometryError);
  EXPECT_THROW(Region(-0.1, 0.8, 0.1, 0.5), GeometryError);
  EXPECT_THROW(Region(0.1, 1.2, 0.1, 0.5), GeometryError);
  EXPECT_NO_THROW(Region(0.0, 1.0, 0.0, 1.0));
}

TEST(BBox, RejectsDegenerateAndOutOfBounds) {
  EXPECT_THROW(BBox(2, 2, 2, 5, 10, 10), GeometryError);
  EXPECT_THROW(BBox(2, 2, 5, 2, 10, 10), GeometryError);
  EXPECT_THROW(BBox(-1, 0, 5, 5, 10, 10), GeometryError);
  EXPECT_THROW(BBox(0, 0, 11, 5, 10, 10), GeometryError);
  EXPECT_THROW(BBox(0, 0, 1, 1, 0, 10), GeometryError);
  const BBox b(100, 50, 200, 150, 400, 300);
  EXPECT_DOUBLE_EQ(b.normalized().left(), 0.25);
  EXPECT_DOUBLE_EQ(b.normalized().bottom(), 0.5);
}

TEST(EvidenceChain, LevelsRequireTheirParent) {
  const BBox b(0, 0, 2, 2, 4, 4);
  EXPECT_THROW(EvidenceChain({}, std::nullopt, {b}, {}, std::nullopt), GeometryError);
  EXPECT_THROW(EvidenceChain({}, Region::full_frame(), {}, {}, mask_from_bbox(b)), GeometryError);
  EXPECT_NO_THROW(EvidenceChain({}, Region::full_frame(), {b}, {}, mask_from_bbox(b)));
}

TEST(FinalAnswer, ChainPresentIffSlow) {
  EXPECT_THROW(FinalAnswer("x", Mode::Slow, std::nullopt, 1.0), ConfigError);
  EXPECT_THROW(FinalAnswer("x", Mode::Fast, EvidenceChain{}, 1.0), ConfigError);
  EXPECT_THROW(FinalAnswer("x", Mode::Failed, std::nullopt, 1.0), ConfigError);
  const FinalAnswer a("x", Mode::Slow, EvidenceChain{}, 3.5);
  EXPECT_EQ(decode_final_answer(encode(a)), a);
}

TEST(Visibility, ThresholdExamples) {
  EXPECT_EQ(classify_visibility(BBox(0, 0, 15, 18, 100, 100), 20, 20), Visibility::Invisible);
  EXPECT_EQ(classify_visibility(BBox(0, 0, 20, 20, 100, 100), 20, 20), Visibility::Visible);
  EXPECT_EQ(classify_visibility(BBox(0, 0, 300, 200, 400, 300), 20, 20), Visibility::Visible);
  EXPECT_THROW(classify_visibility(BBox(0, 0, 5, 5, 10, 10), 0, 20), ConfigError);
}

TEST(Visibility, BoundaryEnumeration) {
  // Invisible exactly when both sides are strictly below the threshold.
  for (int w = 18; w <= 22; ++w) {
    for (int h = 18; h <= 22; ++h) {
      const bool expect_invisible = w <= 19 && h <= 19;
      EXPECT_EQ(classify_visibility(BBox(0, 0, w, h, 50, 50), 20, 20) == Visibility::Invisible,
                expect_invisible)
          << w << "x" << h;
    }
  }
}

// ---------------------------------------------------------------------------
// Chain serialization

EvidenceChain random_chain(std::mt19937_64& rng) {
  std::vector<ContextClue> clues;
  for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) clues.emplace_back("near clue " + std::to_string(rng() % 100));
  std::vector<MissingObject> missing;
  for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) missing.emplace_back("obj" + std::to_string(rng() % 100));
  const int level = static_cast<int>(rng() % 4);  // 0 none, 1 region, 2 +boxes, 3 +mask
  std::optional<Region> region;
  std::vector<BBox> boxes;
  std::optional<Mask> mask;
  if (level >= 1) {
    const double l = (rng() % 1000) / 2000.0, t = (rng() % 1000) / 2000.0;
    region = Region(l, l + 0.1 + (rng() % 1000) / 3000.0, t, t + 0.1 + (rng() % 1000) / 3000.0);
  }
  if (level >= 2) {
    for (int i = 0, n = 1 + static_cast<int>(rng() % 2); i < n; ++i) boxes.push_back(random_box(rng));
  }
  if (level >= 3) mask = mask_from_bbox(boxes.front());
  return EvidenceChain(std::move(clues), region, std::move(boxes), std::move(missing), std::move(mask));
}

TEST(ChainSerialization, EmptyChainRoundTrips) {
  const EvidenceChain c;
  EXPECT_EQ(deserialize_chain(serialize_chain(c)), c);
  EXPECT_TRUE(deserialize_chain(serialize_chain(c)).empty());
}

TEST(ChainSerialization, FullChainRoundTrips) {
  const BBox b(3, 4, 9, 12, 32, 24);
  const EvidenceChain c({ContextClue("near the keyboard")}, Region(0.05, 0.4, 0.1, 0.6), {b},
                        {MissingObject("mouse")}, mask_from_bbox(b));
  const EvidenceChain back = deserialize_chain(serialize_chain(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.clues().at(0).text(), "near the keyboard");
  EXPECT_EQ(back.mask()->area(), 48u);
}

TEST(ChainSerialization, RandomChainsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const EvidenceChain c = random_chain(rng);
    ASSERT_EQ(deserialize_chain(serialize_chain(c)), c) << serialize_chain(c);
  }
}

TEST(ChainSerialization, TruncatedInputIsParseError) {
  const BBox b(0, 0, 2, 2, 4, 4);
  const std::string bytes =
      serialize_chain(EvidenceChain({}, Region::full_frame(), {b}, {}, mask_from_bbox(b)));
  EXPECT_THROW(deserialize_chain(bytes.substr(0, bytes.size() / 2)), ParseError);
  EXPECT_THROW(deserialize_chain(""), ParseError);
}

TEST(ChainSerialization, ErrorsNameTheOffendingField) {
  auto message = [](const std::string& text) -> std::string {
    try {
      deserialize_chain(text);
    } catch (const ParseError& e) {
      return e.what();
    }
    return "no error";
  };
  EXPECT_NE(message(R"({"clues":[],"boxes":[{"x0":"a","y0":0,"x1":1,"y1":1,"image_w":2,"image_h":2}],"missing":[],"region":{"left":0,"right":1,"top":0,"bottom":1}})")
                .find("chain.boxes[0].x0"),
            std::string::npos);
  EXPECT_NE(message(R"({"clues":[],"boxes":[],"missing":[]})").find("no error"), std::string::npos);
  EXPECT_NE(message(R"({"boxes":[],"missing":[]})").find("chain.clues"), std::string::npos);
  EXPECT_NE(message(R"({"clues":[],"boxes":[],"missing":[],"region":{"left":0.9,"right":0.1,"top":0,"bottom":1}})")
                .find("chain.region"),
            std::string::npos);
  EXPECT_NE(message(R"({"clues":[],"boxes":[],"missing":[],"extra":1})").find("chain.extra"),
            std::string::npos);
}

TEST(CanonicalJson, FieldNames) {
  const BBox b(1, 2, 3, 4, 5, 6);
  EXPECT_EQ(encode(b).dump(), R"({"image_h":6,"image_w":5,"x0":1,"x1":3,"y0":2,"y1":4})");
  EXPECT_EQ(encode(Region(0.25, 0.5, 0.0, 1.0)).dump(),
            R"({"bottom":1.0,"left":0.25,"right":0.5,"top":0.0})");
  EXPECT_EQ(encode(mask_from_bbox(BBox(0, 0, 1, 1, 2, 1))).dump(), R"({"height":1,"rle":[0,1,1],"width":2})");
  EXPECT_EQ(encode(Query("img1", "q?", "id1")).dump(),
            R"({"image_ref":"img1","query_id":"id1","question":"q?"})");
}

}  // namespace
}  // namespace fastvis
