#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fastvis/dataset.hpp"

namespace fastvis {
namespace {

AnnotatedImage desk_image() {
  return AnnotatedImage{"desk", 640, 480,
                        {{"keyboard", BBox(200, 300, 400, 360, 640, 480), {}},
                         {"mouse", BBox(410, 320, 418, 326, 640, 480), {}}}};
}

TEST(NegativeTriples, InvisibleObjectGetsNearestAnchorClue) {
  const auto ds = build_negative_triples({{desk_image()}}, {"keyboard", "mouse", "zebra"}, default_templates());
  ASSERT_EQ(ds.triples.size(), 2u);
  EXPECT_TRUE(ds.warnings.empty());

  const TripleRecord& mouse = ds.triples[0];
  EXPECT_EQ(mouse.negativity, Negativity::Invisible);
  ASSERT_EQ(mouse.missing.size(), 1u);
  EXPECT_EQ(mouse.missing[0].label(), "mouse");
  ASSERT_TRUE(mouse.clue);
  EXPECT_EQ(mouse.clue->text(), "near the keyboard");
  EXPECT_EQ(mouse.answer, "Sorry, I can not answer. Missing objects: [mouse]. Context: near the keyboard");
  EXPECT_NE(mouse.question.find("mouse"), std::string::npos);

  const TripleRecord& zebra = ds.triples[1];
  EXPECT_EQ(zebra.negativity, Negativity::Absent);
  EXPECT_EQ(zebra.missing[0].label(), "zebra");
  EXPECT_FALSE(zebra.clue);
  EXPECT_EQ(zebra.answer, "Sorry, I can not answer. Missing objects: [zebra].");
}

TEST(NegativeTriples, AllVisibleAndNothingAbsentYieldsNone) {
  const AnnotatedImage img{"big", 100, 100, {{"cat", BBox(0, 0, 50, 50, 100, 100), {}}}};
  const auto ds = build_negative_triples({{img}}, {"cat"}, default_templates());
  EXPECT_TRUE(ds.triples.empty());
}

TEST(NegativeTriples, ThinObjectIsNotInvisible) {
  // 30x5: one side under the threshold, so still visible.
  const AnnotatedImage img{"thin", 100, 100, {{"pen", BBox(0, 0, 30, 5, 100, 100), {}}}};
  EXPECT_TRUE(build_negative_triples({{img}}, {"pen"}, default_templates()).triples.empty());
}

TEST(NegativeTriples, MissingAnchorWarnsAndOmitsClue) {
  const AnnotatedImage img{"lonely", 100, 100, {{"ant", BBox(1, 1, 4, 4, 100, 100), {}}}};
  const auto ds = build_negative_triples({{img}}, {"ant"}, default_templates());
  ASSERT_EQ(ds.triples.size(), 1u);
  EXPECT_FALSE(ds.triples[0].clue);
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("ant"), std::string::npos);
}

TEST(NegativeTriples, AbsentSamplingTakesRequestedCount) {
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "keyboard", "mouse"};
  const auto ds = build_negative_triples({{desk_image()}}, vocab, default_templates(),
                                         {.seed = 4, .absent_per_image = 3});
  const auto absent = std::count_if(ds.triples.begin(), ds.triples.end(),
                                    [](const TripleRecord& t) { return t.negativity == Negativity::Absent; });
  EXPECT_EQ(absent, 3);
  EXPECT_THROW(build_negative_triples({{desk_image()}}, {}, default_templates()), ConfigError);
}

TEST(NegativeTriples, TemplateValidation) {
  DatasetTemplates t = default_templates();
  t.absent = {"Is there something?"};
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_THROW(decode_templates(Json{{"proposal_prompt", "no slots"}}), ParseError);
  const DatasetTemplates custom = decode_templates(Json{{"absent", {"Any {label} here?"}}});
  const auto ds = build_negative_triples({{desk_image()}}, {"zebra"}, custom);
  EXPECT_EQ(ds.triples.back().question, "Any zebra here?");
}

// Random annotation sets for property checks.
AnnotationSet random_annotations(std::size_t n, std::uint64_t seed, const std::vector<std::string>& vocab) {
  std::mt19937_64 rng(seed);
  AnnotationSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const int W = 64 + static_cast<int>(rng() % 600), H = 64 + static_cast<int>(rng() % 600);
    AnnotatedImage img{"img" + std::to_string(i), W, H, {}};
    std::vector<std::string> labels = vocab;
    std::shuffle(labels.begin(), labels.end(), rng);
    const std::size_t k = rng() % 6;
    for (std::size_t j = 0; j < k; ++j) {
      const int w = 1 + static_cast<int>(rng() % std::min(W, rng() % 2 ? 40 : W));
      const int h = 1 + static_cast<int>(rng() % std::min(H, rng() % 2 ? 40 : H));
      const int x = static_cast<int>(rng() % static_cast<std::uint64_t>(W - w + 1));
      const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(H - h + 1));
      img.objects.push_back({labels[j], BBox(x, y, x + w, y + h, W, H), {}});
    }
    set.images.push_back(std::move(img));
  }
  return set;
}

const std::vector<std::string> kVocab{"cat", "dog", "cup", "pen", "car", "bus", "tree", "lamp", "book", "key"};

TEST(NegativeTriples, RescanSoundnessAndCompleteness) {
  const AnnotationSet set = random_annotations(300, 11, kVocab);
  const auto ds = build_negative_triples(set, kVocab, default_templates(), {.seed = 1});
  std::map<std::string, const AnnotatedImage*> by_ref;
  for (const auto& img : set.images) by_ref[img.image_ref] = &img;

  std::set<std::pair<std::string, std::string>> emitted;
  for (const auto& t : ds.triples) {
    const AnnotatedImage& img = *by_ref.at(t.image_ref);
    const std::string& label = t.missing.at(0).label();
    ASSERT_TRUE(emitted.insert({t.image_ref, label}).second);
    auto it = std::find_if(img.objects.begin(), img.objects.end(), [&](const auto& o) { return o.label == label; });
    if (t.negativity == Negativity::Absent) {
      EXPECT_EQ(it, img.objects.end()) << t.image_ref << " " << label;
    } else {
      ASSERT_NE(it, img.objects.end());
      EXPECT_TRUE(it->bbox.width() < 20 && it->bbox.height() < 20);
    }
  }
  // Every invisible object and every absent vocabulary label is covered.
  for (const auto& img : set.images) {
    std::set<std::string> present;
    for (const auto& o : img.objects) {
      present.insert(o.label);
      if (o.bbox.width() < 20 && o.bbox.height() < 20) EXPECT_TRUE(emitted.contains({img.image_ref, o.label}));
    }
    for (const auto& v : kVocab) {
      if (!present.contains(v)) EXPECT_TRUE(emitted.contains({img.image_ref, v}));
    }
  }
}

TEST(NegativeTriples, DeterministicAndOrderIndependent) {
  AnnotationSet set = random_annotations(100, 5, kVocab);
  const auto dump = [](const NegativeDataset& d) {
    Json j = Json::array();
    for (const auto& t : d.triples) j.push_back(encode(t));
    return j.dump();
  };
  const DatasetOptions opts{.seed = 99, .absent_per_image = 2};
  const std::string a = dump(build_negative_triples(set, kVocab, default_templates(), opts));
  EXPECT_EQ(a, dump(build_negative_triples(set, kVocab, default_templates(), opts)));
  std::reverse(set.images.begin(), set.images.end());
  EXPECT_EQ(a, dump(build_negative_triples(set, kVocab, default_templates(), opts)));
}

TEST(TripleRecord, JsonRoundTrip) {
  const auto ds = build_negative_triples({{desk_image()}}, {"zebra", "mouse"}, default_templates());
  for (const auto& t : ds.triples) EXPECT_EQ(decode_triple(Json::parse(encode(t).dump())), t);
}

TEST(ProposalRecords, AnswerIsNormalizedBoxAtFourDecimals) {
  const AnnotatedImage img{"p", 640, 480, {{"dog", BBox(160, 80, 320, 240, 640, 480), {}}}};
  const auto recs = build_proposal_records({{img}}, default_templates());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].answer, "[0.2500, 0.5000, 0.1667, 0.5000]");
  EXPECT_NE(recs[0].prompt.find("To answer the question: "), std::string::npos);
  EXPECT_EQ(recs[0].prompt.find("[Q]"), std::string::npos);
  EXPECT_EQ(recs[0].prompt.find("[C]"), std::string::npos);
}

TEST(ProposalRecords, ClueNamesNearestVisibleNeighbour) {
  const auto recs = build_proposal_records({{desk_image()}}, default_templates());
  ASSERT_EQ(recs.size(), 2u);
  // Sorted by label: keyboard first (its only neighbour is invisible), then mouse.
  EXPECT_NE(recs[0].prompt.find("based on keyboard?"), std::string::npos);
  EXPECT_NE(recs[1].prompt.find("based on near the keyboard?"), std::string::npos);
}

TEST(ProposalRecords, RoundTripWithinTolerance) {
  AnnotationSet set = random_annotations(200, 21, kVocab);
  const auto recs = build_proposal_records(set, default_templates());
  std::stable_sort(set.images.begin(), set.images.end(),
                   [](const auto& a, const auto& b) { return a.image_ref < b.image_ref; });
  std::size_t i = 0;
  for (const auto& img : set.images) {
    std::vector<const AnnotatedObject*> objs;
    for (const auto& o : img.objects) objs.push_back(&o);
    std::stable_sort(objs.begin(), objs.end(), [](auto* a, auto* b) { return a->label < b->label; });
    for (const auto* o : objs) {
      const Region got = parse_region_text(recs.at(i++).answer);
      EXPECT_NEAR(got.left(), static_cast<double>(o->bbox.x0()) / img.width, 1e-3);
      EXPECT_NEAR(got.right(), static_cast<double>(o->bbox.x1()) / img.width, 1e-3);
      EXPECT_NEAR(got.top(), static_cast<double>(o->bbox.y0()) / img.height, 1e-3);
      EXPECT_NEAR(got.bottom(), static_cast<double>(o->bbox.y1()) / img.height, 1e-3);
    }
  }
  EXPECT_EQ(i, recs.size());
}

TEST(Annotations, JsonCodec) {
  const AnnotationSet set = random_annotations(20, 2, kVocab);
  EXPECT_EQ(encode(decode_annotations(Json::parse(encode(set).dump()))), encode(set));
  const Json short_form = Json::parse(
      R"({"images":[{"image_ref":"a","width":10,"height":10,"objects":[{"label":"x","bbox":{"x0":0,"y0":0,"x1":2,"y1":2}}]}]})");
  EXPECT_EQ(decode_annotations(short_form).images[0].objects[0].bbox, BBox(0, 0, 2, 2, 10, 10));
  Json bad = short_form;
  bad["images"][0]["objects"][0]["bbox"]["x1"] = 11;
  EXPECT_THROW(decode_annotations(bad), ParseError);
  bad = short_form;
  bad["images"][0]["width"] = 0;
  EXPECT_THROW(decode_annotations(bad), ParseError);
}

}  // namespace
}  // namespace fastvis
