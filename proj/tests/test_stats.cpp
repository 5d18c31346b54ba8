#include <gtest/gtest.h>

#include "support/checks.hpp"

using namespace dicex;

TEST(Summarize, Examples) {
  const auto c = summarize(std::vector<double>{3.5, 3.5});
  EXPECT_EQ(c.mean, 3.5);
  EXPECT_EQ(c.std, 0.0);
  const auto two = summarize(std::vector<double>{0, 2});
  EXPECT_EQ(two.mean, 1.0);
  EXPECT_NEAR(two.std, std::sqrt(2.0), 1e-15);
  const auto four = summarize(std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(four.mean, 2.5);
  EXPECT_NEAR(four.std, 1.2909944487358056, 1e-15);
  EXPECT_THROW(summarize(std::vector<double>{1.0}), Error);
}

TEST(Summarize, MatchesOracle) { EXPECT_LT(checks::summarize_vs_oracle(40, 21).worst, 1e-12); }

TEST(PairedTTest, ReferenceFixtures) {
  for (const auto& f : checks::ttest_fixtures()) {
    const auto r = paired_t_test(f.a, f.b);
    EXPECT_NEAR(r.t_statistic, f.t, 1e-6 * std::max(1.0, std::abs(f.t)));
    EXPECT_EQ(r.degrees_of_freedom, f.dof);
    EXPECT_NEAR(r.p_value, f.p, 1e-6);
    EXPECT_EQ(r.significant, f.p < 0.05);
  }
}

TEST(PairedTTest, Examples) {
  try {
    paired_t_test(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3});
    FAIL() << "expected DegenerateDifferences";
  } catch (const DegenerateDifferencesError& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateDifferences);
    EXPECT_EQ(e.mean_difference(), 0.0);
  }
  const auto sym = paired_t_test(std::vector<double>{1, -1, 1, -1}, std::vector<double>{0, 0, 0, 0});
  EXPECT_EQ(sym.t_statistic, 0.0);
  EXPECT_NEAR(sym.p_value, 1.0, 1e-12);
  const auto r = paired_t_test(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0});
  EXPECT_NEAR(r.t_statistic, 2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_EQ(r.degrees_of_freedom, 2);
  EXPECT_NEAR(r.p_value, 0.0742, 5e-5);
}

TEST(PairedTTest, ConstantNonzeroDifferenceCarriesMean) {
  try {
    paired_t_test(std::vector<double>{2, 3, 4}, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const DegenerateDifferencesError& e) {
    EXPECT_EQ(e.mean_difference(), 1.0);
  }
}

TEST(PairedTTest, SwappingArgumentsNegatesT) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int n = 0; n < 30; ++n) {
    std::vector<double> a(2 + gen() % 30), b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = g(gen);
      b[i] = g(gen) + 0.3;
    }
    const auto ab = paired_t_test(a, b), ba = paired_t_test(b, a);
    EXPECT_EQ(ab.t_statistic, -ba.t_statistic);
    EXPECT_EQ(ab.p_value, ba.p_value);
  }
}

TEST(PairedTTest, RejectsBadInput) {
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), Error);
  EXPECT_THROW(paired_t_test(std::vector<double>{1, 2}, std::vector<double>{2}), Error);
}

TEST(StudentT, PValueDecreasesInAbsT) {
  for (int dof : {1, 2, 5, 10, 49, 200}) {
    double prev = 1.0 + 1e-15;
    for (double t = 0.0; t <= 20.0; t += 0.05) {
      const double p = student_t_two_tailed(t, dof);
      EXPECT_LE(p, prev);
      EXPECT_GE(p, 0.0);
      EXPECT_EQ(p, student_t_two_tailed(-t, dof));
      prev = p;
    }
  }
}

TEST(StudentT, CdfAtZeroIsHalf) {
  for (int dof = 1; dof <= 100; ++dof) EXPECT_NEAR(student_t_cdf(0.0, dof), 0.5, 1e-12);
}

TEST(StudentT, KnownClosedForms) {
  // dof 1 is Cauchy; dof 2 has F(t) = 1/2 + t / (2 sqrt(t^2 + 2)).
  for (double t : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    EXPECT_NEAR(student_t_cdf(t, 1), 0.5 + std::atan(t) / M_PI, 1e-12);
    EXPECT_NEAR(student_t_cdf(t, 2), 0.5 + t / (2.0 * std::sqrt(t * t + 2.0)), 1e-12);
  }
}

TEST(IncompleteBeta, Endpoints) {
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 0.0), 0.0);
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 1.0), 1.0);
  // I_x(1, 1) = x and I_x(a, 1) = x^a.
  EXPECT_NEAR(incomplete_beta(1.0, 1.0, 0.3), 0.3, 1e-14);
  EXPECT_NEAR(incomplete_beta(2.5, 1.0, 0.4), std::pow(0.4, 2.5), 1e-14);
}

TEST(Format, PValueScientific) {
  EXPECT_EQ(format_p_value(0.074179900227448538), "7.42e-02");
  EXPECT_EQ(format_p_value(0.00024420007842569), "2.44e-04");
}
