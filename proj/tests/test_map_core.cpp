#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tfspec/map_core.hpp"

using namespace tfspec;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error to be thrown");
  return Errc::InvalidInput;
}

Scalar rat(long n, long d) { return Scalar::rational(n, d); }

PiecewiseMap t10_exact() { return example_map(10, rat(39, 5)); }

}  // namespace

TEST_CASE("one-sided evaluation at breakpoints and endpoints") {
  PiecewiseMap d = doubling_map();
  CHECK(evaluate_one_sided(d, rat(1, 2), Side::Left).same(Scalar(1L)));
  CHECK(evaluate_one_sided(d, rat(1, 2), Side::Right).same(Scalar(0L)));
  CHECK(evaluate_one_sided(d, Scalar(0L), Side::Right).same(Scalar(0L)));
  CHECK(evaluate_one_sided(d, Scalar(1L), Side::Left).same(Scalar(1L)));
  CHECK(evaluate_one_sided(d, rat(1, 4), Side::Left).same(rat(1, 2)));

  PiecewiseMap t = t10_exact();
  CHECK(evaluate_one_sided(t, rat(7, 10), Side::Left).same(Scalar(1L)));
  CHECK(evaluate_one_sided(t, rat(7, 10), Side::Right).same(Scalar(0L)));
  CHECK(evaluate_one_sided(t, Scalar(1L), Side::Left).same(rat(39, 50)));

  CHECK(code_of([&] { evaluate_one_sided(d, Scalar(0L), Side::Left); }) ==
        Errc::NoAdjacentBranch);
  CHECK(code_of([&] { evaluate_one_sided(d, Scalar(1L), Side::Right); }) ==
        Errc::NoAdjacentBranch);
  CHECK(code_of([&] { evaluate_one_sided(d, Scalar(2L), Side::Left); }) ==
        Errc::OutOfDomain);
  Scalar straddle(Rat(499, 1000), Rat(501, 1000));
  CHECK(code_of([&] { evaluate_one_sided(d, straddle, Side::Right); }) ==
        Errc::PrecisionInsufficient);
}

TEST_CASE("one-sided derivatives of any order") {
  PiecewiseMap t = t10_exact();
  CHECK(derivative_one_sided(t, rat(1, 2), Side::Left, 1).same(rat(10, 7)));
  CHECK(derivative_one_sided(t, rat(1, 2), Side::Right, 1).same(rat(10, 7)));
  CHECK(derivative_one_sided(t, rat(1, 2), Side::Left, 2).same(Scalar(0L)));
  CHECK(derivative_one_sided(t, rat(3, 4), Side::Left, 0).same(rat(1, 2)));

  PiecewiseMap b = beta_map(Rat(3, 2));
  CHECK(derivative_one_sided(b, rat(1, 3), Side::Left, 1).same(rat(3, 2)));
  CHECK(derivative_one_sided(b, rat(1, 3), Side::Right, 1).same(rat(3, 2)));

  CHECK(code_of([&] { derivative_one_sided(t, rat(1, 2), Side::Left, -1); }) ==
        Errc::InvalidInput);
  CHECK(code_of([&] { derivative_one_sided(t, rat(1, 2), Side::Left, 9); }) ==
        Errc::DegreeTooLarge);
}

TEST_CASE("doubling map refines into dyadic cells") {
  RefinedPartition p = refine_partition(doubling_map(), 2);
  REQUIRE(p.level == 2);
  REQUIRE(p.cells.size() == 4);
  for (size_t k = 0; k < 4; ++k) {
    const Cell& c = p.cells[k];
    CHECK(c.lo.same(rat(static_cast<long>(k), 4)));
    CHECK(c.hi.same(rat(static_cast<long>(k + 1), 4)));
    std::vector<int> want = {static_cast<int>(k / 2), static_cast<int>(k % 2)};
    CHECK(c.word == want);
    CHECK(c.orientation == 1);
    // iterate is 4x - (2*i0 + i1)
    CHECK(c.iterate.coeff(1).same(Scalar(4L)));
    CHECK(c.iterate.coeff(0).same(Scalar(-static_cast<long>(2 * want[0] + want[1]))));
  }
}

TEST_CASE("tent map refinement keeps cells ordered under orientation flips") {
  RefinedPartition p = refine_partition(tent_map(), 2);
  REQUIRE(p.cells.size() == 4);
  std::vector<std::vector<int>> words;
  for (const auto& c : p.cells) words.push_back(c.word);
  std::vector<std::vector<int>> want = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  CHECK(words == want);
  for (size_t k = 0; k + 1 < p.cells.size(); ++k)
    CHECK(p.cells[k].hi.same(p.cells[k + 1].lo));
  CHECK(p.cells[2].orientation == 1);   // two decreasing steps
  CHECK(p.cells[3].orientation == -1);  // decreasing then increasing
}

// Independent enumeration of the level-2 words of the four-branch family with
// m = 10, rho = 39/5, using plain rational arithmetic on the affine data.
TEST_CASE("four-branch family level-2 cells match a direct enumeration") {
  const Rat dom[5] = {Rat(0), Rat(7, 10), Rat(8, 10), Rat(9, 10), Rat(1)};
  const Rat slope[4] = {Rat(10, 7), Rat(10), Rat(10), Rat(39, 5)};
  const Rat icpt[4] = {Rat(0), Rat(-7), Rat(-8), Rat(-351, 50)};

  std::vector<std::vector<int>> expect_words;
  std::vector<std::pair<Rat, Rat>> expect_targets;  // clipped image window
  for (int i = 0; i < 4; ++i) {
    Rat img_lo = slope[i] * dom[i] + icpt[i];
    Rat img_hi = slope[i] * dom[i + 1] + icpt[i];
    for (int j = 0; j < 4; ++j) {
      Rat t_lo = std::max(img_lo, dom[j]);
      Rat t_hi = std::min(img_hi, dom[j + 1]);
      if (t_lo < t_hi) {
        expect_words.push_back({i, j});
        // level-2 image of the cell: second branch applied to the window
        expect_targets.emplace_back(slope[j] * t_lo + icpt[j],
                                    slope[j] * t_hi + icpt[j]);
      }
    }
  }
  REQUIRE(expect_words.size() == 14);  // frozen count for m=10, rho=39/5

  RefinedPartition p = refine_partition(t10_exact(), 2);
  REQUIRE(p.cells.size() == expect_words.size());
  for (size_t k = 0; k < p.cells.size(); ++k) {
    const Cell& c = p.cells[k];
    CHECK(c.word == expect_words[k]);
    CHECK(c.orientation == 1);
    // The iterate maps the cell onto the clipped window, exactly.
    CHECK(c.iterate.eval(c.lo).same(Scalar(expect_targets[k].first)));
    CHECK(c.iterate.eval(c.hi).same(Scalar(expect_targets[k].second)));
    // Refinement: the cell sits inside its level-1 parent.
    CHECK(c.lo.lo() >= dom[c.word[0]]);
    CHECK(c.hi.hi() <= dom[c.word[0] + 1]);
  }

  // Same combinatorics with an enclosure rho (margins stay decidable).
  PiecewiseMap t_enc = example_map(10, Scalar::from_decimal("7.8", 100));
  RefinedPartition p_enc = refine_partition(t_enc, 2);
  REQUIRE(p_enc.cells.size() == 14);
  for (size_t k = 0; k < p_enc.cells.size(); ++k)
    CHECK(p_enc.cells[k].word == expect_words[k]);
}

TEST_CASE("cell iterates equal step-by-step branch composition") {
  PiecewiseMap t = t10_exact();
  RefinedPartition p = refine_partition(t, 3);
  REQUIRE(p.level == 3);
  for (const Cell& c : p.cells) {
    Scalar x = Scalar(c.lo.lo() / 2 + c.hi.hi() / 2);
    Scalar y = x;
    for (int idx : c.word) y = t.branches[idx].poly.eval(y);
    CHECK(c.iterate.eval(x).same(y));
    // Orientation equals the product of branch orientations (all +1 here).
    CHECK(c.orientation == 1);
  }
}

TEST_CASE("preimages respect the one-sided convention") {
  PiecewiseMap d = doubling_map();
  auto pre = preimages(d, rat(1, 3));
  REQUIRE(pre.size() == 2);
  CHECK(pre[0].x.same(rat(1, 6)));
  CHECK((pre[0].from_left && pre[0].from_right));
  CHECK(pre[1].x.same(rat(2, 3)));
  CHECK((pre[1].from_left && pre[1].from_right));
  for (const auto& pt : pre) {
    Side s = pt.from_left ? Side::Left : Side::Right;
    CHECK(evaluate_one_sided(d, pt.x, s).same(rat(1, 3)));
  }

  PiecewiseMap t = t10_exact();
  auto zero_pre = preimages(t, Scalar(0L));
  REQUIRE(zero_pre.size() == 4);
  const long want_num[4] = {0, 7, 8, 9};
  for (int i = 0; i < 4; ++i) {
    CHECK(zero_pre[i].branch == i);
    CHECK(zero_pre[i].x.same(rat(want_num[i], 10)));
    CHECK_FALSE(zero_pre[i].from_left);  // each is a right limit
    CHECK(zero_pre[i].from_right);
    CHECK(evaluate_one_sided(t, zero_pre[i].x, Side::Right).same(Scalar(0L)));
  }

  PiecewiseMap tent = tent_map();
  auto peak = preimages(tent, Scalar(1L));
  REQUIRE(peak.size() == 2);
  CHECK(peak[0].x.same(rat(1, 2)));
  CHECK(peak[0].from_left);
  CHECK_FALSE(peak[0].from_right);
  CHECK(peak[1].x.same(rat(1, 2)));
  CHECK_FALSE(peak[1].from_left);
  CHECK(peak[1].from_right);

  CHECK(code_of([&] { preimages(d, Scalar(2L)); }) == Errc::OutOfDomain);
}

TEST_CASE("uniform expansion certificates") {
  ExpansionEstimate d = check_uniform_expansion(doubling_map(), 3);
  CHECK(d.C.same(Scalar(1L)));
  CHECK(d.lambda.same(rat(1, 2)));
  REQUIRE(d.min_derivative.size() == 3);
  CHECK(d.min_derivative[0].same(Scalar(2L)));
  CHECK(d.min_derivative[1].same(Scalar(4L)));
  CHECK(d.min_derivative[2].same(Scalar(8L)));

  ExpansionEstimate t = check_uniform_expansion(t10_exact(), 3);
  CHECK(t.lambda.same(rat(7, 10)));  // slowest branch has slope 10/7
  CHECK(t.C.same(Scalar(1L)));
  CHECK(t.min_derivative[2].same(rat(1000, 343)));

  PiecewiseMap lazy =
      make_map({Scalar(0L), rat(1, 2), Scalar(1L)},
               {Poly::x(), Poly::affine(Scalar(-1L), Scalar(2L))});
  CHECK(code_of([&] { check_uniform_expansion(lazy, 3); }) == Errc::NotExpanding);
}

TEST_CASE("structural validation rejects malformed maps") {
  // merging smoothly at the breakpoint
  CHECK(code_of([] {
          make_map({Scalar(0L), Scalar::rational(1, 2), Scalar(1L)},
                   {Poly::affine(Scalar(0L), Scalar::rational(1, 2)),
                    Poly::affine(Scalar(0L), Scalar::rational(1, 2))});
        }) == Errc::NotMaximal);
  // derivative touching zero
  CHECK(code_of([] {
          make_map({Scalar(0L), Scalar::rational(1, 2), Scalar(1L)},
                   {Poly({Scalar(0L), Scalar(0L), Scalar(1L)}),
                    Poly::affine(Scalar(-1L), Scalar(2L))});
        }) == Errc::NotMonotone);
  // image escapes [0,1]
  CHECK(code_of([] {
          make_map({Scalar(0L), Scalar::rational(1, 2), Scalar(1L)},
                   {Poly::affine(Scalar(0L), Scalar(3L)),
                    Poly::affine(Scalar(-1L), Scalar(2L))});
        }) == Errc::OutOfDomain);
  // breakpoints out of order
  CHECK(code_of([] {
          make_map({Scalar(0L), Scalar::rational(2, 3), Scalar::rational(1, 3),
                    Scalar(1L)},
                   {Poly::x(), Poly::x(), Poly::x()});
        }) == Errc::InvalidInput);
  // domain must start at 0
  CHECK(code_of([] {
          make_map({Scalar::rational(1, 10), Scalar(1L)}, {Poly::x()});
        }) == Errc::InvalidInput);
}

TEST_CASE("partition cell budget is enforced") {
  CHECK(code_of([] { refine_partition(doubling_map(), 12, 1000); }) ==
        Errc::DepthTooLarge);
  CHECK(refine_partition(doubling_map(), 3, 8).cells.size() == 8);
}

TEST_CASE("maps serialize to and from JSON") {
  nlohmann::json j = nlohmann::json::parse(R"({
    "breakpoints": ["0", "7/10", "8/10", "9/10", "1"],
    "branches": [
      {"coeffs": ["0", "10/7"], "orientation": 1},
      {"coeffs": ["-7", "10"], "orientation": 1},
      {"coeffs": ["-8", "10"], "orientation": 1},
      {"coeffs": ["-351/50", "39/5"], "orientation": 1}
    ]})");
  PiecewiseMap m = map_from_json(j);
  PiecewiseMap ref = t10_exact();
  REQUIRE(m.branch_count() == ref.branch_count());
  for (size_t i = 0; i < m.breakpoints.size(); ++i)
    CHECK(m.breakpoints[i].same(ref.breakpoints[i]));
  for (int i = 0; i < m.branch_count(); ++i) {
    CHECK(m.branches[i].poly.identical_exact(ref.branches[i].poly));
    CHECK(m.branches[i].orientation == ref.branches[i].orientation);
  }

  PiecewiseMap rt = map_from_json(map_to_json(m));
  for (int i = 0; i < m.branch_count(); ++i)
    CHECK(rt.branches[i].poly.identical_exact(m.branches[i].poly));

  // a lying orientation is rejected
  nlohmann::json bad = j;
  bad["branches"][0]["orientation"] = -1;
  CHECK(code_of([&] { map_from_json(bad); }) == Errc::InvalidInput);

  // enclosure literals
  Scalar enc = scalar_from_json(nlohmann::json::parse(R"({"dec":"0.5","bits":20})"));
  CHECK(!enc.exact());
  CHECK(enc.contains(Rat(1, 2)));
  Scalar rt_enc = scalar_from_json(scalar_to_json(enc));
  CHECK(rt_enc.same(enc));
}
