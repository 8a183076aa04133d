#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "sole/evalkit.hpp"
#include "sole/synthgen.hpp"

using namespace sole;

namespace {

ShoeIdentity shoe(const std::string& id, int model = 0, Foot foot = Foot::Left) {
  ShoeIdentity s;
  s.shoe_id = id;
  s.model = model;
  s.foot = foot;
  return s;
}

std::size_t edge_count(const GrayImage& img) { return extract_points(edge_detect(img)).size(); }

std::size_t differing(const GrayImage& a, const GrayImage& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) n += a.pixels()[i] != b.pixels()[i];
  return n;
}

}  // namespace

TEST(Synthgen, ShoeAndCaptureAreDeterministic) {
  SynthSpec spec;
  spec.seed = 11;
  const ShoeMaster a = generate_shoe(spec, shoe("S001")), b = generate_shoe(spec, shoe("S001"));
  EXPECT_EQ(a.image.pixels(), b.image.pixels());
  CaptureOptions opt;
  opt.blur_level = 4;
  EXPECT_EQ(capture(spec, a, "S001", opt).pixels(), capture(spec, b, "S001", opt).pixels());
  spec.seed = 12;
  EXPECT_NE(generate_shoe(spec, shoe("S001")).image.pixels(), a.image.pixels());
}

TEST(Synthgen, RacsAreCutAndDifferBetweenShoes) {
  SynthSpec spec;
  const ShoeMaster a = generate_shoe(spec, shoe("S001")), b = generate_shoe(spec, shoe("S004"));
  ASSERT_EQ(a.racs.size(), static_cast<std::size_t>(spec.rac_count));
  ASSERT_EQ(b.racs.size(), static_cast<std::size_t>(spec.rac_count));
  std::size_t cut = 0;
  for (const Rac& r : a.racs) {
    const int row = static_cast<int>(std::lround(r.row)), col = static_cast<int>(std::lround(r.col));
    int white = 0;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) white += a.image(row + dr, col + dc) == 255;
    EXPECT_GT(white, 0);
    cut += a.base(row, col) == 0;
  }
  // Most RACs land on tread contact area and therefore change the image.
  EXPECT_GE(cut, a.racs.size() * 3 / 4);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.racs.size(); ++i) same += a.racs[i].col == b.racs[i].col && a.racs[i].row == b.racs[i].row;
  EXPECT_EQ(same, 0u);
}

TEST(Synthgen, SameModelSharesTread) {
  SynthSpec spec;
  spec.rac_count = 0;
  spec.wear_patches = 0;
  const auto a = generate_shoe(spec, shoe("S001", 0)), b = generate_shoe(spec, shoe("S002", 0)),
             c = generate_shoe(spec, shoe("S003", 1));
  EXPECT_EQ(a.image.pixels(), b.image.pixels());
  EXPECT_GT(differing(a.image, c.image), a.image.pixels().size() / 10);
}

TEST(Synthgen, RightFootMirrorsTheModelTread) {
  SynthSpec spec;
  spec.rac_count = 0;
  spec.wear_patches = 0;
  const auto left = generate_shoe(spec, shoe("S001", 0, Foot::Left));
  const auto right = generate_shoe(spec, shoe("S001", 0, Foot::Right));
  EXPECT_EQ(mirror_columns(left.image, left.image.width() - 1, 255).pixels(), right.image.pixels());
}

TEST(Synthgen, BlurSigmaGrowsWithLevel) {
  const SynthSpec spec;
  for (int level = 0; level < 10; level += 2) EXPECT_LT(blur_sigma(spec, level), blur_sigma(spec, level + 2));
  EXPECT_EQ(blur_sigma(spec, 0), 0.0);
}

TEST(Synthgen, EdgePointsFallWithBlur) {
  const SynthSpec spec;
  const ShoeMaster m = generate_shoe(spec, shoe("S001"));
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (int level : {0, 2, 6, 10}) {
    CaptureOptions opt;
    opt.replicate = 2;
    opt.blur_level = level;
    const std::size_t n = edge_count(capture(spec, m, "S001", opt));
    EXPECT_LT(n, previous) << "blur level " << level;
    previous = n;
  }
}

TEST(Synthgen, ReplicatesDifferOnlySlightly) {
  const SynthSpec spec;
  const ShoeMaster m = generate_shoe(spec, shoe("S001"));
  CaptureOptions r1, r2;
  r2.replicate = 2;
  const GrayImage a = capture(spec, m, "S001", r1), b = capture(spec, m, "S001", r2);
  EXPECT_GT(differing(a, b), 0u);
  const double na = static_cast<double>(edge_count(a)), nb = static_cast<double>(edge_count(b));
  EXPECT_NEAR(na / nb, 1.0, 0.15);
}

TEST(Synthgen, WearErodesRacs) {
  SynthSpec spec;
  spec.salt_density = 0.0;
  spec.jitter_sigma = 0.0;
  spec.rotation_jitter_deg = 0.0;
  const ShoeMaster m = generate_shoe(spec, shoe("S001"));
  CaptureOptions fresh, worn;
  worn.wear_level = 2;
  const GrayImage a = capture(spec, m, "S001", fresh), b = capture(spec, m, "S001", worn);
  EXPECT_GT(differing(a, b), 0u);
  const GrayImage base = capture(spec, ShoeMaster{m.base, m.base, {}}, "S001", fresh);
  EXPECT_LT(differing(b, base), differing(a, base));
}

TEST(Synthgen, PartialCaptureKeepsOneHalf) {
  const SynthSpec spec;
  const ShoeMaster m = generate_shoe(spec, shoe("S001"));
  CaptureOptions full, toe;
  toe.partial = PartialSpec{Region::Toe, Foot::Left};
  const GrayImage a = capture(spec, m, "S001", full), b = capture(spec, m, "S001", toe);
  const std::size_t na = black_pixels(binarize(a)).size(), nb = black_pixels(binarize(b)).size();
  EXPECT_GT(nb, na / 4);
  EXPECT_LT(nb, na * 3 / 4);
  for (int c = 0; c < b.width(); ++c) EXPECT_EQ(b(b.height() - 1, c), 255);
}

TEST(Synthgen, CorpusRegistryRoundTrips) {
  SynthSpec spec;
  spec.seed = 3;
  CorpusPlan plan;
  plan.shoes = 4;
  plan.blur_levels = {6};
  plan.visits = {1, 2};
  const SynthCorpus corpus = generate_corpus(spec, plan, 2);
  // Per shoe: 2 replicates at each visit plus one blurred capture.
  ASSERT_EQ(corpus.records.size(), 4u * 5u);
  EXPECT_EQ(corpus.records.size(), corpus.images.size());
  const SynthCorpus again = generate_corpus(spec, plan, 1);
  for (std::size_t i = 0; i < corpus.images.size(); ++i) EXPECT_EQ(corpus.images[i].pixels(), again.images[i].pixels());

  const auto dir = std::filesystem::temp_directory_path() / "sole_synth_corpus_test";
  std::filesystem::remove_all(dir);
  write_corpus(corpus, dir.string());
  const auto records = read_registry((dir / "registry.csv").string());
  ASSERT_EQ(records.size(), corpus.records.size());
  const ImageLoader load = directory_loader(dir.string());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].image_path, corpus.records[i].image_path);
    EXPECT_EQ(records[i].model, corpus.records[i].model);
    EXPECT_EQ(records[i].visit, corpus.records[i].visit);
    EXPECT_EQ(records[i].blur_level, corpus.records[i].blur_level);
    EXPECT_EQ(load(records[i]).pixels(), corpus.images[i].pixels());
  }
  std::filesystem::remove_all(dir);
}

TEST(Synthgen, MatesOverlapMoreThanNonMates) {
  SynthSpec spec;
  spec.seed = 5;
  CorpusPlan plan;
  plan.shoes = 6;
  plan.blur_levels = {2, 6};
  const SynthCorpus corpus = generate_corpus(spec, plan);
  const auto ids = shoe_ids(corpus.records);
  const std::set<std::string> all(ids.begin(), ids.end());
  const std::size_t f = *feature_index("q_pct_threshold_3");
  for (Scenario s : {Scenario::PristineAN, Scenario::Blurry02, Scenario::Blurry06}) {
    const auto pairs = build_pairs(corpus.records, s, all);
    const auto out = featurize_pairs(corpus.records, pairs.all(), corpus.loader(), PipelineConfig{}, 5);
    ASSERT_TRUE(out.failures.empty());
    std::vector<double> mated, non_mated;
    for (const auto& r : out.rows) (r.label ? mated : non_mated).push_back(r.features.values[f]);
    EXPECT_GT(quantile(mated, 0.5), quantile(non_mated, 0.5)) << to_string(s);
  }
}

TEST(Synthgen, RejectsBadSettings) {
  SynthSpec spec;
  spec.period = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SynthSpec{};
  spec.families.clear();
  EXPECT_THROW(generate_shoe(spec, shoe("S001")), ConfigError);
  CorpusPlan plan;
  plan.blur_levels = {3};
  EXPECT_THROW(plan.validate(), ConfigError);
  EXPECT_EQ(parse_tread_family("hex"), TreadFamily::Hex);
  EXPECT_THROW(parse_tread_family("zigzag"), ConfigError);
}
