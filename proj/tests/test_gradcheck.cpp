#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afs/error.hpp"
#include "afs/gradcheck.hpp"

using namespace afs;

TEST_CASE("the op suite passes at the default tolerance") {
    auto results = run_gradcheck("ops", 1, GradCheckOptions{});
    CHECK(results.size() >= 20);
    CHECK(all_passed(results));
    for (const CheckResult& r : results) CHECK(r.max_rel_err < 1e-3f);
}

TEST_CASE("block and model suites pass") {
    CHECK(all_passed(run_gradcheck("blocks", 2, GradCheckOptions{})));
    CHECK(all_passed(run_gradcheck("model", 3, GradCheckOptions{})));
    CHECK_THROWS_AS(run_gradcheck("everything", 1, GradCheckOptions{}), ConfigError);
}

TEST_CASE("a falsified gradient entry is caught") {
    // Negative control: the checker must not be vacuously green.
    GradCheckOptions opts;
    opts.corrupt = true;
    auto results = run_gradcheck("ops", 1, opts);
    CHECK_FALSE(all_passed(results));
    int failed = 0;
    for (const CheckResult& r : results) failed += r.pass ? 0 : 1;
    CHECK(failed == static_cast<int>(results.size()));  // every problem is poisoned
}

TEST_CASE("results render one line per problem") {
    auto results = run_gradcheck("model", 4, GradCheckOptions{});
    const std::string text = format_results(results);
    CHECK(text.find("PASS") != std::string::npos);
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n' ? 1 : 0;
    CHECK(lines == results.size());
}
