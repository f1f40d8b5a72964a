#include <catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "rpg/eval/metrics.hpp"
#include "rpg/eval/split.hpp"
#include "support/oracles.hpp"

using namespace rpg;
using namespace rpg::eval;

TEST_CASE("tar_at_far worked examples") {
  const ScoreSet perfect{{1.0, 1.0, 1.0}, {-1.0, -1.0}};
  for (double far : {1e-6, 0.1, 1.0}) CHECK(tar_at_far(perfect, far) == 1.0);
  const ScoreSet same{{0.3, 0.3}, {0.3, 0.3, 0.3}};
  CHECK(tar_at_far(same, 1.0) == 1.0);
  const ScoreSet ten{{0.55, 0.65, 0.75, 0.85}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}};
  CHECK(tar_at_far(ten, 0.2) == 0.25);
  CHECK(rpg::testing::oracle_tar_at_far(ten, 0.2) == 0.25);
  const std::vector<double> levels{0.1, 0.2, 0.5};
  CHECK(tar_at_far(ten, levels) == std::vector<double>{0.0, 0.25, 1.0});
}

TEST_CASE("tar_at_far and eer reject bad input") {
  CHECK_THROWS_AS(tar_at_far(ScoreSet{{}, {0.1}}, 0.1), MetricError);
  CHECK_THROWS_AS(tar_at_far(ScoreSet{{0.1}, {}}, 0.1), MetricError);
  CHECK_THROWS_AS(eer(ScoreSet{{}, {0.1}}), MetricError);
  const ScoreSet s{{0.5}, {0.1}};
  CHECK_THROWS_AS(tar_at_far(s, 0.0), MetricError);
  CHECK_THROWS_AS(tar_at_far(s, 1.5), MetricError);
  CHECK_THROWS_AS(tar_at_far(s, std::nan("")), MetricError);
}

TEST_CASE("metrics match exhaustive oracles on random score sets") {
  SplitMix64 rng(17);
  const auto far = curve_far_levels();
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = rpg::testing::random_scores(rng);
    for (double f : {1e-3, 0.05, 0.1, 0.3, 0.5, 1.0}) CHECK(tar_at_far(s, f) == rpg::testing::oracle_tar_at_far(s, f));
    CHECK(eer(s) == Catch::Approx(rpg::testing::oracle_eer(s)).margin(1e-12));
    const auto tar = tar_at_far(s, far);
    for (std::size_t i = 1; i < tar.size(); ++i) CHECK(tar[i] >= tar[i - 1]);
    const double e = eer(s);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("eer worked examples") {
  CHECK(eer(ScoreSet{{0.9, 0.8}, {0.1, 0.2, 0.3}}) == 0.0);
  CHECK(eer(ScoreSet{{0.5, 0.5}, {0.5, 0.5}}) == 0.5);
  CHECK(eer(ScoreSet{{0.2, 0.4, 0.6, 0.8}, {0.2, 0.4, 0.6, 0.8}}) == Catch::Approx(0.5));
  // one impostor above one genuine: FAR=FRR=1/2 at t=0.5
  CHECK(eer(ScoreSet{{0.4, 0.9}, {0.1, 0.5}}) == Catch::Approx(0.5));
}

TEST_CASE("curve export") {
  SplitMix64 rng(3);
  const auto s = rpg::testing::random_scores(rng);
  const auto csv = curve_csv(s);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);
  CHECK(csv.rfind("far,tar\n", 0) == 0);
  const auto far = curve_far_levels();
  CHECK(far.front() == Catch::Approx(1e-6));
  CHECK(far.back() == 1.0);
  for (std::size_t i = 1; i < far.size(); ++i) CHECK(far[i] / far[i - 1] == Catch::Approx(std::pow(1e6, 1.0 / 49.0)));

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double f = std::stod(line.substr(0, comma)), t = std::stod(line.substr(comma + 1));
    CHECK(f == Catch::Approx(far[row]).epsilon(1e-8));
    CHECK(t == Catch::Approx(rpg::testing::oracle_tar_at_far(s, far[row])).epsilon(1e-8));
    ++row;
  }
  CHECK(row == 50);

  const auto dir = std::filesystem::temp_directory_path() / "rpg_test_eval";
  export_curve(s, dir / "a" / "curve.csv");
  export_curve(s, dir / "b" / "curve.csv");
  std::ifstream a(dir / "a" / "curve.csv"), b(dir / "b" / "curve.csv");
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
  std::filesystem::remove_all(dir);
}

TEST_CASE("score dump round-trip") {
  const ScoreSet s{{0.25, 1.0 / 3.0}, {-0.5, 0.125}};
  const auto text = score_dump(s);
  CHECK(text.rfind("label,score\ngenuine,0.25\n", 0) == 0);
  const auto back = parse_score_dump(text);
  CHECK(back.genuine.size() == 2);
  CHECK(back.impostor == s.impostor);
  CHECK(score_dump(back) == text);
  CHECK_THROWS_AS(parse_score_dump("label,score\nmaybe,0.1\n"), MetricError);
  CHECK_THROWS_AS(parse_score_dump("genuine,abc\n"), MetricError);
  CHECK_THROWS_AS(parse_score_dump("genuine 0.1\n"), MetricError);
  CHECK_THROWS_AS(read_score_dump("/nonexistent/scores.csv"), MetricError);
}

TEST_CASE("make_split reproduces the published partitions") {
  std::vector<std::uint64_t> ids(3266);
  std::iota(ids.begin(), ids.end(), 0);
  const auto p13 = make_split(ids, {1, 3}, 0);
  CHECK(p13.train.size() == 818);
  CHECK(p13.test.size() == 2448);
  CHECK(p13.tag == "1:3");
  const auto p11 = make_split(ids, {1, 1}, 0);
  CHECK(p11.train.size() + p11.test.size() == 3266);
  CHECK(p11.tag == "1:1");

  std::vector<std::uint64_t> ten(10);
  std::iota(ten.begin(), ten.end(), 100);
  const auto p = make_split(ten, {1, 1}, 5);
  CHECK(p.train.size() == 5);
  CHECK(p.test.size() == 5);
  const auto q = make_split(ten, {1, 1}, 5);
  CHECK(p.train == q.train);
  CHECK(p.test == q.test);
  CHECK(make_split(ten, {2, 3}, 1).tag == "custom 2:3");
}

TEST_CASE("make_split is a disjoint cover for every seed and ratio") {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(0, 60));
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(rng());
    const SplitRatio r{static_cast<std::size_t>(rng.uniform_int(1, 4)), static_cast<std::size_t>(rng.uniform_int(1, 4))};
    const auto p = make_split(ids, r, rng());
    std::set<std::uint64_t> tr(p.train.begin(), p.train.end()), te(p.test.begin(), p.test.end());
    for (auto id : te) CHECK(tr.count(id) == 0);
    CHECK(tr.size() + te.size() == n);
    CHECK(p.test.size() == r.test * (n / (r.train + r.test)));
  }
  CHECK_THROWS_AS(make_split({1, 2, 2}, {1, 1}, 0), ConfigError);
}

TEST_CASE("split ratio parsing") {
  CHECK(parse_ratio("1:3").test == 3);
  CHECK(parse_ratio("7:2").tag() == "custom 7:2");
  for (const char* bad : {"", "1", "0:1", "1:-2", "a:b", "1:2:3", "1:2x"}) CHECK_THROWS_AS(parse_ratio(bad), ConfigError);
}

TEST_CASE("pairing counts") {
  auto emb = [](std::size_t n) {
    std::vector<std::vector<float>> e;
    for (std::size_t i = 0; i < n; ++i) e.push_back({float(i + 1), 1.0f});
    return e;
  };
  {
    const auto e = emb(2);
    const std::vector<std::size_t> id{0, 0};
    const auto s = score_pairs(e, id);
    CHECK(s.genuine.size() == 1);
    CHECK(s.impostor.empty());
  }
  {
    const auto e = emb(2);
    const std::vector<std::size_t> id{0, 1};
    const auto s = score_pairs(e, id);
    CHECK(s.genuine.empty());
    CHECK(s.impostor.size() == 1);
  }
  {
    const auto e = emb(6);
    const std::vector<std::size_t> id{0, 0, 1, 1, 2, 2};
    const auto s = score_pairs(e, id);
    CHECK(s.genuine.size() == 3);
    CHECK(s.impostor.size() == 12);
    const auto capped = score_pairs(e, id, {5, 9});
    CHECK(capped.genuine.size() == 3);
    CHECK(capped.impostor.size() == 5);
    for (double v : capped.impostor)
      CHECK(std::find(s.impostor.begin(), s.impostor.end(), v) != s.impostor.end());
    CHECK(score_pairs(e, id, {5, 9}) == capped);
  }
  const std::vector<std::vector<float>> e{{1.0f, 0.0f}, {0.0f, 2.0f}, {-3.0f, 0.0f}};
  const std::vector<std::size_t> id{0, 1, 2};
  CHECK(score_pairs(e, id).impostor == std::vector<double>{0.0, -1.0, 0.0});
  CHECK_THROWS_AS(score_pairs(e, std::vector<std::size_t>{0, 1}), MetricError);
}

TEST_CASE("impostor subsampling is uniform") {
  std::vector<std::vector<float>> e;
  std::vector<std::size_t> id;
  for (std::size_t i = 0; i < 20; ++i) {
    e.push_back({float(i), 1.0f});
    id.push_back(i);
  }
  // 190 impostor pairs, cap 19: every pair should be picked about 1/10 of the time
  std::map<double, int> hits;
  for (std::uint64_t seed = 0; seed < 2000; ++seed)
    for (double v : score_pairs(e, id, {19, seed}).impostor) ++hits[v];
  for (const auto& [v, h] : hits) {
    CHECK(h > 0);
    (void)v;
  }
  std::size_t total = 0;
  for (const auto& [v, h] : hits) total += h;
  CHECK(total == 19 * 2000);
}
