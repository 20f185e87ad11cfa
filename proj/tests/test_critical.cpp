#include "catch_amalgamated.hpp"
#include "dirac/critical.hpp"

using namespace dirac;
using Catch::Approx;

namespace {

const CriticalComponent* point_near(const CriticalReport& r, double x, double y) {
    for (const auto& c : r.components)
        if (c.type == "point" && std::abs(wrap_offset(c.location[0] - x, 2 * M_PI)) < 1e-6 &&
            std::abs(wrap_offset(c.location[1] - y, 2 * M_PI)) < 1e-6)
            return &c;
    return nullptr;
}

}  // namespace

TEST_CASE("cos x + cos y has one minimum, two saddles and one maximum", "[critical]") {
    TorusGrid g({64, 64});
    CriticalReport r = find_critical_set(g, ScalarFunction::lookup("cos_x_plus_cos_y"));
    REQUIRE(r.components.size() == 4);
    CHECK(r.point_counts() == std::vector<int>{1, 2, 1});
    CHECK(r.index_sum() == 0);
    const CriticalComponent* mn = point_near(r, M_PI, M_PI);
    REQUIRE(mn);
    CHECK(mn->morse_index == 0);
    CHECK(mn->rate_min == Approx(1.0));
    const CriticalComponent* mx = point_near(r, 0, 0);
    REQUIRE(mx);
    CHECK(mx->morse_index == 2);
    CHECK(r.injectivity_bound() == Approx(M_PI / 2));
}

TEST_CASE("bott_mixed: a minimum circle and two points", "[critical]") {
    TorusGrid g({64, 64});
    CriticalReport r = find_critical_set(g, ScalarFunction::lookup("bott_mixed"));
    REQUIRE(r.components.size() == 3);
    const auto& c = r.components[0];
    CHECK(c.type == "circle");
    CHECK(c.axis == 1);
    CHECK(std::abs(wrap_offset(c.location[0], 2 * M_PI)) < 1e-9);
    CHECK(c.morse_index == 0);
    CHECK(c.euler == 0);
    // normal rate 2 + sin y along the circle
    CHECK(c.rate_min == Approx(1.0).epsilon(1e-3));
    CHECK(c.rate_max == Approx(3.0).epsilon(1e-3));
    const CriticalComponent* top = point_near(r, M_PI, M_PI / 2);
    const CriticalComponent* sad = point_near(r, M_PI, 3 * M_PI / 2);
    REQUIRE(top);
    REQUIRE(sad);
    CHECK(top->morse_index == 2);
    CHECK(sad->morse_index == 1);
    CHECK(r.index_sum() == 0);
    CHECK(r.point_counts() == std::vector<int>{0, 1, 1});
}

TEST_CASE("cos theta on the circle", "[critical]") {
    TorusGrid g({128});
    CriticalReport r = find_critical_set(g, ScalarFunction::lookup("cos_theta"));
    REQUIRE(r.components.size() == 2);
    CHECK(r.point_counts() == std::vector<int>{1, 1});
    CHECK(r.index_sum() == 0);
}

TEST_CASE("cos x on T^2 gives two circles", "[critical]") {
    TorusGrid g({64, 32});
    CriticalReport r = find_critical_set(g, ScalarFunction::lookup("cos_x"));
    REQUIRE(r.components.size() == 2);
    for (const auto& c : r.components) {
        CHECK(c.type == "circle");
        CHECK(c.axis == 1);
    }
    CHECK(r.index_sum() == 0);
}

TEST_CASE("critical tori are refused", "[critical]") {
    TorusGrid g({32, 16, 16});
    CHECK_THROWS_AS(find_critical_set(g, ScalarFunction::lookup("cos(x)")), StructureError);
}

TEST_CASE("distance to a circle ignores the tangent direction", "[critical]") {
    TorusGrid g({64, 64});
    CriticalReport r = find_critical_set(g, ScalarFunction::lookup("bott_mixed"));
    const auto& c = r.components[0];
    CHECK(distance_to(g, c, {0.5, 2.0, 0}) == Approx(0.5));
    CHECK(distance_to(g, c, {2 * M_PI - 0.25, 5.0, 0}) == Approx(0.25));
}
