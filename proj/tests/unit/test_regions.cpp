#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>

#include "nestfuse/error.hpp"
#include "nestfuse/regions.hpp"
#include "nestfuse/wasserstein.hpp"

using namespace nestfuse;

namespace {

ad::Mat grid_coords(int w, int h, double pitch) {
    ad::Mat c(w * h, 2);
    for (int r = 0; r < h; ++r)
        for (int k = 0; k < w; ++k) c.row(r * w + k) << k * pitch, r * pitch;
    return c;
}

template <class F>
void expect_kind(ErrorKind kind, F f) {
    try {
        f();
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(e.kind() == kind);
    }
}

}  // namespace

TEST_CASE("region json forms round-trip") {
    for (const char *text : {R"({"label":"a","indices":[4,1,9]})", R"({"label":"d","disc":{"center":[1.5,2],"radius":3}})",
                             R"({"label":"p","polygon":[[0,0],[4,0],[0,4]]})"}) {
        const auto r = parse_region(text);
        const auto again = parse_region(region_to_json(r));
        CHECK(again.label == r.label);
        CHECK(region_to_json(again) == region_to_json(r));
    }
    const auto d = parse_region(R"({"label":"d","disc":{"center":[1.5,2],"radius":3}})");
    const auto &disc = std::get<Disc>(d.shape);
    CHECK(disc.cx == 1.5);
    CHECK(disc.cy == 2.0);
    CHECK(disc.radius == 3.0);
}

TEST_CASE("malformed regions are format errors") {
    for (const char *text : {"[]", R"({"label":"a"})", R"({"label":"a","indices":[-1]})",
                             R"({"label":"a","indices":[1],"disc":{"center":[0,0],"radius":1}})",
                             R"({"label":"a","disc":{"center":[0],"radius":1}})",
                             R"({"label":"a","disc":{"center":[0,0],"radius":-1}})",
                             R"({"label":"a","polygon":[[0,0],[1,1]]})", "{"}) {
        INFO(text);
        expect_kind(ErrorKind::kFormat, [&] { parse_region(text); });
    }
}

TEST_CASE("region sets with and without pairs") {
    const auto explicit_pairs = parse_region_set(
        R"({"regions":[{"label":"a","indices":[0]},{"label":"b","indices":[1]},{"label":"c","indices":[2]}],
            "pairs":[["c","a"]]})");
    CHECK(explicit_pairs.pairs == std::vector<std::pair<std::string, std::string>>{{"c", "a"}});
    const auto all = parse_region_set(
        R"([{"label":"a","indices":[0]},{"label":"b","indices":[1]},{"label":"c","indices":[2]}])");
    CHECK(all.pairs == std::vector<std::pair<std::string, std::string>>{{"a", "b"}, {"a", "c"}, {"b", "c"}});
    expect_kind(ErrorKind::kInvalidReference, [] {
        parse_region_set(R"({"regions":[{"label":"a","indices":[0]}],"pairs":[["a","z"]]})");
    });
}

TEST_CASE("index regions are sorted, deduplicated and range checked") {
    const Region r{"r", std::vector<Index>{5, 1, 5, 3}};
    CHECK(resolve_region(r, 6, std::nullopt) == std::vector<Index>{1, 3, 5});
    expect_kind(ErrorKind::kInvalidReference, [&] { resolve_region(r, 5, std::nullopt); });
    expect_kind(ErrorKind::kValidation, [] { resolve_region({"e", std::vector<Index>{}}, 5, std::nullopt); });
}

TEST_CASE("disc membership matches a distance oracle and is inclusive") {
    const auto coords = grid_coords(20, 20, 15.0);
    const Disc disc{75.0, 90.0, 45.0};
    const auto got = resolve_region({"d", disc}, 400, coords);
    std::vector<Index> want;
    for (Index i = 0; i < 400; ++i)
        if (std::hypot(coords(i, 0) - 75.0, coords(i, 1) - 90.0) <= 45.0) want.push_back(i);
    CHECK(got == want);
    // (30, 90) is exactly 45 away
    CHECK(std::find(got.begin(), got.end(), Index(6 * 20 + 2)) != got.end());
    expect_kind(ErrorKind::kFormat, [&] { resolve_region({"d", disc}, 400, std::nullopt); });
    expect_kind(ErrorKind::kValidation, [&] { resolve_region({"d", Disc{-500, -500, 1}}, 400, coords); });
}

TEST_CASE("convex polygon membership matches a half-plane oracle") {
    const auto coords = grid_coords(30, 30, 1.0);
    const std::vector<std::pair<double, double>> tri{{2.3, 1.7}, {25.1, 6.2}, {9.4, 27.8}};
    const auto got = resolve_region({"t", Polygon{tri}}, 900, coords);
    auto side = [](auto a, auto b, double x, double y) {
        return (b.first - a.first) * (y - a.second) - (b.second - a.second) * (x - a.first);
    };
    std::vector<Index> want;
    for (Index i = 0; i < 900; ++i) {
        const double x = coords(i, 0), y = coords(i, 1);
        const double s0 = side(tri[0], tri[1], x, y), s1 = side(tri[1], tri[2], x, y), s2 = side(tri[2], tri[0], x, y);
        if ((s0 > 0 && s1 > 0 && s2 > 0) || (s0 < 0 && s1 < 0 && s2 < 0)) want.push_back(i);
    }
    CHECK(got == want);
}

TEST_CASE("disjoint discs resolve to disjoint index sets") {
    const auto coords = grid_coords(40, 40, 15.0);
    const auto a = resolve_region({"a", Disc{150, 150, 75}}, 1600, coords);
    const auto b = resolve_region({"b", Disc{400, 400, 75}}, 1600, coords);
    std::vector<Index> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    CHECK(both.empty());
    CHECK(a.size() == 81);
    CHECK(b.size() == 81);
}

TEST_CASE("region separation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> unit(0.0, 1.0);
    LatentField f;
    f.mu.resize(10, 2);
    for (Eigen::Index i = 0; i < f.mu.size(); ++i) f.mu.data()[i] = unit(rng);
    f.mu.row(9).setConstant(NAN);
    f.coverage.assign(10, 1);
    f.coverage[9] = 0;

    SUBCASE("identical regions are zero apart") {
        const auto s = region_separation(f, {0, 1, 2, 3}, {0, 1, 2, 3}, 64, 1);
        CHECK(s.distance == 0.0);
        CHECK(s.method == "sliced-wasserstein");
    }
    SUBCASE("matches the sliced distance on the selected rows, dropping uncovered ones") {
        const auto s = region_separation(f, {0, 1, 2}, {5, 6, 7, 9}, 64, 4);
        CHECK(s.n_a == 3);
        CHECK(s.n_b == 3);
        const ad::Mat a = f.mu.topRows(3), b = f.mu.middleRows(5, 3);
        CHECK(s.distance == sliced_wasserstein(a, b, 64, 4));
    }
    SUBCASE("a side with no encoded rows is a validation error") {
        expect_kind(ErrorKind::kValidation, [&] { region_separation(f, {0}, {9}, 8, 0); });
    }
    SUBCASE("one-dimensional latents use the exact distance") {
        LatentField g;
        g.mu = f.mu.leftCols(1).topRows(9);
        g.coverage.assign(9, 1);
        const auto s = region_separation(g, {0, 1, 2}, {3, 4}, 256, 0);
        CHECK(s.method == "wasserstein-1d");
        CHECK(s.n_proj == 1);
        const std::vector<double> a{g.mu(0, 0), g.mu(1, 0), g.mu(2, 0)}, b{g.mu(3, 0), g.mu(4, 0)};
        CHECK(s.distance == wasserstein_1d(a, b));
    }
}
