#include <gtest/gtest.h>

#include "fusion/error.hpp"
#include "fusion/verify.hpp"

using namespace fusion;

namespace {

std::vector<PublicResult> publics(int correct, int total) {
  std::vector<PublicResult> v;
  for (int k = 0; k < total; ++k) v.push_back({k < correct ? 1 : 0, 1});
  return v;
}

}  // namespace

TEST(Accuracy, Examples) {
  const auto a = check_accuracy(publics(3, 4), 0.95);
  EXPECT_DOUBLE_EQ(a.eta, 0.75);
  EXPECT_FALSE(a.pass);
  for (double delta : {0.0, 0.5, 0.95, 1.0}) EXPECT_TRUE(check_accuracy(publics(7, 7), delta).pass);
  const auto b = check_accuracy(publics(95, 100), 0.95);
  EXPECT_DOUBLE_EQ(b.eta, 0.95);
  EXPECT_TRUE(b.pass);
  EXPECT_FALSE(check_accuracy(publics(94, 100), 0.95).pass);
  EXPECT_TRUE(check_accuracy(publics(1, 10), 0.1).pass);
  EXPECT_THROW(check_accuracy({}, 0.95), PreconditionError);
  EXPECT_THROW(check_accuracy(publics(1, 1), 1.5), DomainError);
}

TEST(Consistency, Examples) {
  const std::vector<std::vector<Label>> ok{{1, 1}, {2, 2}};
  EXPECT_TRUE(check_consistency(ok).pass);
  const std::vector<std::vector<Label>> bad{{1, 2}, {2, 2}};
  const auto c = check_consistency(bad);
  EXPECT_FALSE(c.pass);
  ASSERT_TRUE(c.first_violation);
  EXPECT_EQ(c.first_violation->query_index, 0u);
  EXPECT_EQ(c.first_violation->labels, (std::vector<Label>{1, 2}));
  const std::vector<std::vector<Label>> single{{1}, {5}, {0}};
  EXPECT_TRUE(check_consistency(single).pass);
  const std::vector<std::vector<Label>> ragged{{1, 1}, {2}};
  EXPECT_THROW(check_consistency(ragged), DomainError);
}

TEST(Verdict, AcceptReleasesLabels) {
  const std::vector<std::vector<Label>> g{{1, 1}, {2, 2}};
  const auto r = verdict(check_accuracy(publics(4, 4), 0.95), check_consistency(g), g);
  ASSERT_TRUE(r.accepted());
  EXPECT_EQ(r.released_labels(), (std::vector<Label>{1, 2}));
}

TEST(Verdict, AbortsWithheldLabels) {
  const std::vector<std::vector<Label>> g{{1, 1}, {2, 2}};
  const auto low = verdict(check_accuracy(publics(1, 4), 0.95), check_consistency(g), g);
  EXPECT_EQ(low.abort_reason(), AbortReason::AccuracyBelowThreshold);
  EXPECT_THROW(low.released_labels(), std::logic_error);

  const std::vector<std::vector<Label>> h{{1, 1}, {2, 3}};
  const auto inc = verdict(check_accuracy(publics(4, 4), 0.95), check_consistency(h), h);
  EXPECT_EQ(inc.abort_reason(), AbortReason::InconsistentCopies);
  EXPECT_THROW(inc.released_labels(), std::logic_error);
  ASSERT_TRUE(inc.consistency().first_violation);
  EXPECT_EQ(inc.consistency().first_violation->query_index, 1u);
}

TEST(Verdict, OrderOfChecksDoesNotChangeAcceptance) {
  for (int correct : {1, 4})
    for (bool consistent : {true, false}) {
      const std::vector<std::vector<Label>> g{{1, 1}, {2, consistent ? 2 : 0}};
      const auto cons = check_consistency(g);
      const auto acc = check_accuracy(publics(correct, 4), 0.95);
      const auto r = verdict(acc, cons, g);
      EXPECT_EQ(r.accepted(), acc.pass && cons.pass);
    }
}

TEST(VerifyResults, UsesConfig) {
  UnmixedResults u{{{1, 1}}, publics(9, 10)};
  EXPECT_TRUE(verify_results(u, {0.9}).accepted());
  EXPECT_FALSE(verify_results(u, {0.95}).accepted());
}
