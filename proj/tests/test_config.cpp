#include "catch_amalgamated.hpp"
#include "dirac/config.hpp"

using namespace dirac;

TEST_CASE("sections and comments", "[config]") {
    RunConfig c;
    c.load_string("# run\n[problem]\nf = bott_mixed ; inline\ngrid = 4096x128\n\n[solver]\nk=6\n");
    CHECK(c.str("problem.f") == "bott_mixed");
    CHECK(c.sizes("problem.grid") == std::vector<int>{4096, 128});
    CHECK(c.integer("solver.k") == 6);
}

TEST_CASE("unknown keys are rejected with their location", "[config]") {
    RunConfig c;
    CHECK_THROWS_WITH(c.load_string("[solver]\ntol = 1e-9\nmethd = lanczos\n", "run.ini"),
                      Catch::Matchers::ContainsSubstring("run.ini:3") && Catch::Matchers::ContainsSubstring("solver.methd"));
    CHECK_THROWS_AS(c.set("bogus", "1"), InputError);
    CHECK_THROWS_AS(c.set_assignment("solver.tol"), InputError);
    CHECK_THROWS_AS(c.load_string("[problem\n"), InputError);
    CHECK_THROWS_AS(c.load_string("problem.f\n"), InputError);
}

TEST_CASE("typed accessors", "[config]") {
    RunConfig c;
    c.set_assignment("experiment.s = 8, 16 32");
    c.set("solver.k", "2.5");
    c.set("output.coo", "maybe");
    c.set("solver.tol", "1e-9x");
    CHECK(c.list("experiment.s") == std::vector<double>{8, 16, 32});
    CHECK_THROWS_AS(c.integer("solver.k"), InputError);
    CHECK_THROWS_AS(c.flag("output.coo"), InputError);
    CHECK_THROWS_AS(c.num("solver.tol"), InputError);
    CHECK_THROWS_AS(c.str("problem.f"), InputError);
}

TEST_CASE("defaults never override explicit values", "[config]") {
    RunConfig c;
    c.set("solver.k", "4");
    c.set_default("solver.k", "8");
    c.set_default("solver.tol", "1e-10");
    CHECK(c.integer("solver.k") == 4);
    CHECK(c.num("solver.tol") == 1e-10);
    CHECK(c.echo()["solver.k"] == "4");
}
