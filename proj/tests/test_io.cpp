#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "otslot/emd.hpp"
#include "otslot/io.hpp"
#include "otslot/sinkhorn.hpp"
#include "support/oracles.hpp"

using namespace otslot;

namespace {

ParseError parse_failure(const std::string& text) {
  std::istringstream in(text);
  try {
    read_problem(in);
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no parse error for:\n" << text;
  return ParseError("none", 0, 0);
}

}  // namespace

TEST(ReadProblem, CostOnly) {
  std::istringstream in("2 3\n1 2 3\n4 5 6.5\n");
  TransportProblem p = read_problem(in);
  EXPECT_EQ(p.cost.shape(), (Shape{2, 3}));
  EXPECT_EQ(p.cost.to_vector(), (std::vector<double>{1, 2, 3, 4, 5, 6.5}));
  EXPECT_FALSE(p.marginals.has_value());
}

TEST(ReadProblem, WithMarginalsAndBlankLines) {
  std::istringstream in("\n2 2\n\t0 1\n1   0\n\n0.5 1.5\n1 1\n");
  TransportProblem p = read_problem(in);
  ASSERT_TRUE(p.marginals.has_value());
  EXPECT_EQ(p.marginals->a.to_vector(), (std::vector<double>{0.5, 1.5}));
  EXPECT_EQ(p.marginals->b.to_vector(), (std::vector<double>{1, 1}));
}

TEST(ReadProblem, ErrorsCarryLineAndColumn) {
  ParseError bad_token = parse_failure("2 2\n0 x1\n1 0\n");
  EXPECT_EQ(bad_token.line(), 2u);
  EXPECT_EQ(bad_token.column(), 3u);

  ParseError short_row = parse_failure("2 3\n1 2 3\n4 5\n");
  EXPECT_EQ(short_row.line(), 3u);
  EXPECT_EQ(short_row.column(), 4u);

  ParseError long_row = parse_failure("1 2\n1 2   7\n");
  EXPECT_EQ(long_row.line(), 2u);
  EXPECT_EQ(long_row.column(), 7u);

  ParseError missing_row = parse_failure("3 1\n1\n2\n");
  EXPECT_EQ(missing_row.line(), 4u);

  ParseError header = parse_failure("0 2\n");
  EXPECT_EQ(header.line(), 1u);
  EXPECT_EQ(header.column(), 1u);

  ParseError marginals = parse_failure("1 1\n3\n1\n1 2\n");
  EXPECT_EQ(marginals.line(), 4u);
  EXPECT_EQ(marginals.column(), 3u);

  ParseError trailing = parse_failure("1 1\n3\n1\n1\n  9\n");
  EXPECT_EQ(trailing.line(), 5u);
  EXPECT_EQ(trailing.column(), 3u);

  EXPECT_EQ(parse_failure("").line(), 1u);
  EXPECT_NE(std::string(parse_failure("2 2\n0 x1\n1 0\n").what()).find("line 2, column 3"), std::string::npos);
}

TEST(ReadProblem, MissingFileIsAnIoError) {
  EXPECT_THROW(read_problem_file("/nonexistent/cost.txt"), IoError);
}

TEST(WriteMatrix, RoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  auto values = oracle::gaussian_vector(12, rng, 1e-3);
  values[0] = 1.0 / 3.0;
  values[1] = std::numeric_limits<double>::denorm_min();
  values[2] = -0.0;
  values[3] = 1e300;
  Tensor m = Tensor::matrix(3, 4, values);
  std::stringstream buf;
  write_matrix(buf, m);
  Tensor back = read_matrix(buf);
  EXPECT_EQ(back.shape(), m.shape());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(std::signbit(back[i]), std::signbit(m[i]));
    EXPECT_EQ(back[i], m[i]) << i;
  }
}

TEST(WriteMatrix, SolvedPlanRoundTrips) {
  std::mt19937_64 rng(9);
  Tensor cost = Tensor::matrix(4, 5, oracle::gaussian_vector(20, rng));
  Tensor plan = sinkhorn(cost, Marginals::uniform(4, 5), {0.3, 1000, 1e-9, SinkhornDomain::kAuto}).plan.values;
  const std::string path = ::testing::TempDir() + "otslot_plan.txt";
  write_matrix_file(path, plan);
  EXPECT_EQ(read_matrix_file(path).to_vector(), plan.to_vector());
}

TEST(Solve, UniformPlanForZeroCost) {
  std::istringstream in("2 2\n0 0\n0 0\n");
  TransportProblem p = read_problem(in);
  Tensor plan = sinkhorn(p.cost, Marginals::uniform(2, 2), {}).plan.values;
  for (double v : plan.values()) EXPECT_NEAR(v, 0.5, 1e-12);
}

TEST(Solve, FiveByFiveEmdMatchesBruteForce) {
  std::istringstream in(
      "5 5\n"
      "4 1 3 8 2\n"
      "2 0 5 1 7\n"
      "3 2 2 6 4\n"
      "9 4 1 3 5\n"
      "6 3 7 2 1\n"
      "1 1 1 1 1\n"
      "1 1 1 1 1\n");
  TransportProblem p = read_problem(in);
  TransportPlan plan = emd_exact(p.cost, *p.marginals);
  EXPECT_NEAR(transport_cost(p.cost, plan.values), oracle::brute_force_assignment(p.cost.to_vector(), 5, 5), 1e-9);
}
