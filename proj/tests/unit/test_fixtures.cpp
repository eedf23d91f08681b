#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "json.hpp"

#include "../support/fixtures.hpp"

using namespace cmf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json expected(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_SUITE("fixtures") {
  TEST_CASE("generated fixtures are reproducible and meet their expectations") {
    const auto root = fs::temp_directory_path() / "cmf_fixture_tests";
    fs::remove_all(root);
    fixtures::generate_fixtures(3, (root / "a").string());
    fixtures::generate_fixtures(3, (root / "b").string());
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), root / "a");
      CHECK_MESSAGE(slurp(entry.path()) == slurp(root / "b" / rel), rel.string());
    }

    const auto bucket = expected(root / "a" / "bucket_world" / "expected.json");
    CHECK(bucket["negatives"]["value"] == 6);
    CHECK(bucket["eligible_negatives"]["value"] == 6);
    CHECK(bucket["negatives"].contains("basis"));

    const auto als = expected(root / "a" / "als_realizable" / "expected.json");
    CHECK(als["final_loss"]["value"].get<double>() < als["loss_bound"]["value"].get<double>());

    const auto fold = expected(root / "a" / "folding_micro" / "expected.json");
    CHECK(fold["clashing_users"]["value"] == 0);
    CHECK(fs::exists(root / "a" / "folding_micro" / "dataset" / "manifest.json"));
  }

  TEST_CASE("different seeds give different worlds") {
    const auto a = fixtures::random_fixture(1);
    const auto b = fixtures::random_fixture(2);
    CHECK(content_hash(a.data, a.features) != content_hash(b.data, b.features));
    const auto c = fixtures::random_fixture(1);
    CHECK(content_hash(a.data, a.features) == content_hash(c.data, c.features));
  }
}
