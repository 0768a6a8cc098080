#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "quipforge/error.hpp"
#include "quipforge/synthesizer.hpp"

using namespace quipforge;

namespace {

std::vector<SampledResponse> responses(const std::vector<double>& quips,
                                       const std::vector<uint64_t>& lengths) {
  std::vector<SampledResponse> out;
  for (size_t i = 0; i < quips.size(); ++i) {
    SampledResponse r;
    r.response_id = "r" + std::to_string(i);
    r.text = "t" + std::to_string(i);
    r.length = lengths[i];
    r.quip = quips[i];
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("first qualifying pair: length constraint picks neighbour") {
  const auto sorted = sort_by_quip(responses({0.90, 0.72, 0.55, 0.10}, {100, 105, 40, 98}));
  const auto pair = select_pair(sorted, SynthConfig{});
  REQUIRE(pair.has_value());
  CHECK(pair->preferred_rank == 0);
  CHECK(pair->dispreferred_rank == 1);
  CHECK(pair->preferred.response_id == "r0");
  CHECK(pair->dispreferred.response_id == "r1");
  CHECK(pair->quip_gap == 0.18000000000000005);
  CHECK(pair->length_ratio == 0.05);
}

TEST_CASE("first qualifying pair: skips a too-long candidate") {
  const auto sorted = sort_by_quip(responses({0.90, 0.72, 0.55, 0.10}, {100, 200, 95, 98}));
  const auto pair = select_pair(sorted, SynthConfig{});
  REQUIRE(pair.has_value());
  CHECK(pair->preferred_rank == 0);
  CHECK(pair->dispreferred_rank == 2);
  CHECK(pair->quip_gap == 0.35);
  CHECK(pair->length_ratio == 0.05263157894736842);
}

TEST_CASE("no pair when quips are too close") {
  const auto sorted = sort_by_quip(responses({0.5, 0.45, 0.41}, {10, 10, 10}));
  CHECK_FALSE(select_pair(sorted, SynthConfig{}).has_value());
  CHECK_FALSE(select_pair(sort_by_quip(responses({0.9}, {1})), SynthConfig{}).has_value());
}

TEST_CASE("quip gap of exactly delta does not qualify") {
  CHECK_FALSE(satisfies_quip_constraint(0.5, 0.25, 0.25));
  CHECK(satisfies_quip_constraint(0.5, 0.2, 0.25));
  CHECK_FALSE(satisfies_length_constraint(100, 110, 0.1));
  CHECK(satisfies_length_constraint(100, 109, 0.1));
}

TEST_CASE("length ratio edge cases") {
  CHECK(length_ratio(0, 0) == 0.0);
  CHECK(std::isinf(length_ratio(0, 5)));
  CHECK(length_ratio(10, 12) == 0.2);
  CHECK(satisfies_length_constraint(0, 0, 0.1));
  CHECK_FALSE(satisfies_length_constraint(0, 3, 0.1));
}

TEST_CASE("disabling the length constraint") {
  SynthConfig cfg;
  cfg.enforce_length = false;
  const auto sorted = sort_by_quip(responses({0.90, 0.72, 0.55, 0.10}, {100, 200, 95, 98}));
  const auto pair = select_pair(sorted, cfg);
  REQUIRE(pair.has_value());
  CHECK(pair->dispreferred_rank == 1);
}

TEST_CASE("sort is stable and rejects unscored or out-of-range quips") {
  const auto sorted = sort_by_quip(responses({0.3, 0.7, 0.3, 0.7}, {1, 1, 1, 1}));
  CHECK(sorted[0].response_id == "r1");
  CHECK(sorted[1].response_id == "r3");
  CHECK(sorted[2].response_id == "r0");
  CHECK(sorted[3].response_id == "r2");
  auto rs = responses({0.3}, {1});
  rs[0].quip.reset();
  CHECK_THROWS_AS(sort_by_quip(rs), Error);
  CHECK_THROWS_AS(sort_by_quip(responses({1.5}, {1})), Error);
}

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  c.delta_quip = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SynthConfig{};
  c.delta_length = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(SynthConfig{}.delta_quip == 0.1);
  CHECK(SynthConfig{}.delta_length == 0.1);
}

TEST_CASE("brute force equivalence on random small lists") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(0, 8);
  std::uniform_int_distribution<int> q(0, 20);
  std::uniform_int_distribution<uint64_t> len(0, 30);
  for (int trial = 0; trial < 3000; ++trial) {
    const int t = size(rng);
    std::vector<double> quips;
    std::vector<uint64_t> lens;
    for (int i = 0; i < t; ++i) {
      quips.push_back(q(rng) / 20.0);
      lens.push_back(len(rng));
    }
    const auto sorted = sort_by_quip(responses(quips, lens));
    std::vector<oracle::Candidate> cands;
    for (const auto& r : sorted) cands.push_back({*r.quip, r.length});
    for (bool enforce : {true, false}) {
      SynthConfig cfg;
      cfg.enforce_length = enforce;
      const auto got = select_pair(sorted, cfg);
      const auto want = oracle::first_qualifier(cands, 0.1, 0.1, enforce);
      REQUIRE(got.has_value() == want.has_value());
      if (got) {
        CHECK(got->preferred_rank == want->first);
        CHECK(got->dispreferred_rank == want->second);
      }
    }
  }
}

TEST_CASE("dataset synthesis emits at most one pair per prompt") {
  std::vector<PromptResponses> prompts(3);
  prompts[0] = {"p0", "q0", responses({0.9, 0.1}, {10, 10})};
  prompts[1] = {"p1", "q1", responses({0.5, 0.5}, {10, 10})};
  prompts[2] = {"p2", "q2", responses({0.9}, {10})};
  const SynthOutput out = synthesize_dataset(prompts, SynthConfig{});
  REQUIRE(out.pairs.size() == 1);
  CHECK(out.pairs[0].prompt_id == "p0");
  CHECK(out.stats.prompts_in == 3);
  CHECK(out.stats.pairs_out == 1);
  CHECK(out.stats.discarded_no_pair == 1);
  CHECK(out.stats.discarded_too_few_responses == 1);

  prompts[2].prompt_id = "p0";
  CHECK_THROWS_AS(synthesize_dataset(prompts, SynthConfig{}), Error);
}

TEST_CASE("rerank picks the highest quip, lowest index on ties") {
  CHECK(rerank_best_of_n(responses({0.2, 0.8, 0.8, 0.1}, {1, 1, 1, 1})) == 1);
  CHECK(rerank_best_of_n(responses({0.0}, {1})) == 0);
  CHECK_THROWS_AS(rerank_best_of_n(std::vector<SampledResponse>{}), Error);
}

TEST_CASE("default length counts whitespace tokens") {
  CHECK(default_length("the cat  sat\n") == 3);
  CHECK(default_length("") == 0);
}
