#pragma once

// Deterministic synthetic scenes with one queried target each, in one of four
// placements: clearly visible, thin (one side under the threshold, still
// visible), invisible (both sides under the threshold) or absent. The expected
// mode and gold answer come from the placement, not from the engine's rules.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fastvis/pipeline.hpp"
#include "fastvis/scene.hpp"

namespace fastvis {

enum class Placement { Visible, Thin, Invisible, Absent };

struct SyntheticCorpus {
  SceneLibrary scenes;
  std::vector<BatchItem> items;
  std::vector<Placement> placements;
  std::vector<Mode> expected_modes;
  std::vector<std::string> targets;
};

struct SynthOptions {
  std::size_t count = 200;
  std::uint64_t seed = 7;
  int image_w = 640;
  int image_h = 480;
  /// Size band for the perception threshold the corpus is built around.
  int threshold = kDefaultThreshold;
};

inline SyntheticCorpus make_synthetic_corpus(const SynthOptions& opts = {}) {
  static constexpr std::array kTargets{"mouse", "cup", "pen", "phone", "glove", "bottle",
                                       "clock", "remote", "key", "coin"};
  static constexpr std::array kAnchors{"keyboard", "table", "bench", "sofa"};
  static constexpr std::array kDistractors{"lamp", "plant", "book", "chair"};
  static constexpr std::array kColors{"red", "blue", "green", "white", "black", "yellow"};
  static constexpr std::array kLocations{"on the left", "on the right", "in the middle",
                                         "at the top", "at the bottom"};

  if (opts.threshold < 2) throw ConfigError("synth: threshold must be >= 2");
  std::mt19937_64 rng(opts.seed);
  auto uniform = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  auto choose = [&](const auto& arr) { return std::string(arr[rng() % arr.size()]); };
  const int W = opts.image_w, H = opts.image_h, T = opts.threshold;

  SyntheticCorpus c;
  for (std::size_t i = 0; i < opts.count; ++i) {
    const std::string image_ref = fmt::format("synth-{:04d}", i);
    const auto placement = static_cast<Placement>(i % 4);
    const std::string target = choose(kTargets);
    const std::string anchor = choose(kAnchors);
    std::vector<SceneObject> objects;

    const int aw = uniform(120, 240), ah = uniform(40, 90);
    const int ax = uniform(0, W - aw), ay = uniform(0, H - ah);
    objects.push_back({anchor, BBox(ax, ay, ax + aw, ay + ah, W, H),
                       {{"color", choose(kColors)}, {"location", choose(kLocations)}}, ""});

    int tw = 0, th = 0;
    switch (placement) {
      case Placement::Visible: tw = uniform(T, 4 * T); th = uniform(T, 4 * T); break;
      case Placement::Thin: tw = uniform(T + 5, 3 * T); th = uniform(1, T - 1); break;
      case Placement::Invisible: tw = uniform(1, T - 1); th = uniform(1, T - 1); break;
      case Placement::Absent: break;
    }
    const std::string color = choose(kColors);
    const std::string location = choose(kLocations);
    if (placement != Placement::Absent) {
      // Beside the anchor, clamped into the frame.
      int tx = std::min(ax + aw + uniform(2, 20), W - tw);
      int ty = std::clamp(ay + uniform(0, ah), 0, H - th);
      objects.push_back({target, BBox(tx, ty, tx + tw, ty + th, W, H),
                         {{"color", color}, {"location", location}}, "near the " + anchor});
    }
    const std::string distractor = choose(kDistractors);
    const int dw = uniform(30, 80), dh = uniform(30, 80);
    const int dx = uniform(0, W - dw), dy = uniform(0, H - dh);
    objects.push_back({distractor, BBox(dx, dy, dx + dw, dy + dh, W, H), {{"color", choose(kColors)}}, ""});

    std::string question, gold;
    switch (rng() % 3) {
      case 0:
        question = fmt::format("What color is the {}?", target);
        gold = placement == Placement::Absent ? fmt::format("There is no {} in the image.", target) : color;
        break;
      case 1:
        question = fmt::format("Is there a {} in the image?", target);
        gold = placement == Placement::Absent ? "no" : "yes";
        break;
      default:
        question = fmt::format("Where is the {}?", target);
        gold = placement == Placement::Absent ? fmt::format("There is no {} in the image.", target) : location;
        break;
    }

    c.scenes.emplace(image_ref, SceneGraph(W, H, std::move(objects)));
    c.items.push_back(BatchItem{Query(image_ref, question, fmt::format("q{:04d}", i)), {gold}, std::nullopt});
    c.placements.push_back(placement);
    c.expected_modes.push_back(placement == Placement::Visible || placement == Placement::Thin ? Mode::Fast
                                                                                               : Mode::Slow);
    c.targets.push_back(target);
  }
  return c;
}

}  // namespace fastvis
