#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "calendar.hpp"
#include "curve_sampler.hpp"
#include "doctest.h"
#include "market_data.hpp"
#include "rng.hpp"

using namespace curvecast;

namespace {

// Builds per-contract series on one calendar day from (offset_ns, price) lists.
std::vector<MicropriceSeries> day_series(
    const std::vector<std::vector<std::pair<int64_t, double>>>& per_contract, int day = 0) {
    const int64_t base = days_from_civil(2018, 1, 2 + day) * kNsPerDay;
    std::vector<MicropriceSeries> out;
    for (size_t c = 0; c < per_contract.size(); ++c) {
        MicropriceSeries s;
        s.contract_id = static_cast<int32_t>(c);
        for (const auto& [off, p] : per_contract[c]) s.entries.emplace_back(base + off, p);
        out.push_back(std::move(s));
    }
    return out;
}

CurveSeries ramp_curve(int n_entries, int C = 1, double step = 1.0) {
    std::vector<std::vector<std::pair<int64_t, double>>> pc(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < n_entries; ++i)
            pc[static_cast<size_t>(c)].emplace_back(i * 1000, 9750.0 + step * i + 3.0 * c);
    return align_and_downsample(day_series(pc), 0.1);
}

}  // namespace

TEST_CASE("rule 2 never triggers: one entry for the day") {
    auto series = day_series({{{0, 9750.00}, {1000, 9750.04}, {2000, 9750.05}},
                              {{0, 9800.00}, {1500, 9800.02}}});
    CurveSeries curve = align_and_downsample(series, 0.1);
    CHECK(curve.size() == 1);
    CHECK(curve.prices[0][0] == 9750.00);
    CHECK(curve.prices[0][1] == 9800.00);
}

TEST_CASE("rule 1 then rule 2 step-through with a lagging contract") {
    // contract 0 walks 9750.00 -> 9750.04 -> 9750.12; contract 1 quotes once.
    auto series = day_series({{{0, 9750.00}, {1000, 9750.04}, {2000, 9750.12}},
                              {{500, 9800.00}}});
    CurveSeries curve = align_and_downsample(series, 0.1);
    REQUIRE(curve.size() == 2);
    // first joint observation: both contracts quoted by t=500
    CHECK(curve.prices[0][0] == 9750.00);
    CHECK(curve.prices[0][1] == 9800.00);
    // trigger at the 9750.12 event (|0.12| >= 0.1); contract 1 at latest value
    CHECK(curve.timestamps[1] - curve.timestamps[0] == 1500);
    CHECK(curve.prices[1][0] == 9750.12);
    CHECK(curve.prices[1][1] == 9800.00);
}

TEST_CASE("non-positive cutoff is rejected") {
    auto series = day_series({{{0, 9750.0}}});
    CHECK_THROWS_AS(align_and_downsample(series, 0.0), ConfigError);
}

TEST_CASE("downsampling trigger guarantee within each day") {
    SyntheticMarketConfig cfg;
    cfg.contracts = 3;
    cfg.days = 4;
    cfg.quotes_per_day = 200;
    cfg.seed = 17;
    auto market = generate_synthetic_market(cfg);
    auto series = build_microprice_series(market.events, 3);
    const double M = 0.1;
    CurveSeries curve = align_and_downsample(series, M);
    REQUIRE(curve.size() > 10);
    for (size_t i = 1; i < curve.size(); ++i) {
        if (curve.day_of_entry(i) != curve.day_of_entry(i - 1)) continue;
        CHECK((curve.prices[i] - curve.prices[i - 1]).cwiseAbs().maxCoeff() >= M);
    }
}

TEST_CASE("day with a silent contract is skipped with a warning") {
    auto series = day_series({{{0, 9750.0}, {1000, 9751.0}}, {}});
    CurveSeries curve = align_and_downsample(series, 0.1);
    CHECK(curve.size() == 0);
    CHECK(curve.warnings.size() == 1);
}

TEST_CASE("window counts per day") {
    CHECK(build_windows(ramp_curve(100)).empty());

    auto one = build_windows(ramp_curve(101));
    REQUIRE(one.size() == 1);
    CHECK(one[0].target[0] == 9750.0 + 100.0);  // target is entry 101

    auto five = build_windows(ramp_curve(105));
    REQUIRE(five.size() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(five[static_cast<size_t>(k)].window(0, 0) == 9750.0 + k);
        CHECK(five[static_cast<size_t>(k)].window(99, 0) == 9750.0 + k + 99);
        CHECK(five[static_cast<size_t>(k)].target[0] == 9750.0 + k + 100);
    }
}

TEST_CASE("windows never straddle a day boundary") {
    std::vector<std::vector<std::pair<int64_t, double>>> d0(1), d1(1);
    for (int i = 0; i < 60; ++i) d0[0].emplace_back(i * 1000, 9700.0 + i);
    for (int i = 0; i < 60; ++i) d1[0].emplace_back(i * 1000, 9850.0 + i);
    auto s0 = day_series(d0, 0);
    auto s1 = day_series(d1, 1);
    s0[0].entries.insert(s0[0].entries.end(), s1[0].entries.begin(), s1[0].entries.end());
    CurveSeries curve = align_and_downsample(s0, 0.1);
    CHECK(curve.size() == 120);
    // 60 entries per day < 101 needed for one window
    CHECK(build_windows(curve, 100).empty());
    auto w = build_windows(curve, 30);
    CHECK(w.size() == 2 * (60 - 30));
    for (const auto& s : w) {
        const bool first_day = s.window(0, 0) < 9800.0;
        CHECK(first_day == (s.target[0] < 9800.0));
    }
}

TEST_CASE("all-constant window is rejected as degenerate") {
    RawWindow raw;
    raw.window = Mat::Constant(100, 2, 9750.0);
    raw.target = Vec::Constant(2, 9750.0);
    WindowSample s;
    CHECK(!normalize_window(raw, s));
}

TEST_CASE("normalization hand case: alternating 1,3 with target 4") {
    RawWindow raw;
    raw.window = Mat(100, 1);
    for (int i = 0; i < 100; ++i) raw.window(i, 0) = (i % 2 == 0) ? 1.0 : 3.0;
    raw.target = Vec::Constant(1, 4.0);
    WindowSample s;
    REQUIRE(normalize_window(raw, s));
    CHECK(s.shift[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(s.scale == doctest::Approx(1.0).epsilon(1e-15));  // population std
    for (int i = 0; i < 100; ++i)
        CHECK(s.window(i, 0) == doctest::Approx(i % 2 == 0 ? -1.0 : 1.0).epsilon(1e-15));
    CHECK(s.target[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("normalized window stats: per-contract mean 0, global std 1") {
    SampleStats st;
    CurveSeries curve = ramp_curve(110, 3, 0.13);
    auto samples = make_samples(curve, 100, &st);
    REQUIRE(!samples.empty());
    for (const auto& s : samples) {
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(s.window.col(c).mean()) < 1e-12);
        const double var = s.window.array().square().sum() / (100.0 * 3.0);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-12);
    }
}

TEST_CASE("denormalization round trip and covariance scaling") {
    RawWindow raw;
    raw.window = Mat(100, 2);
    Rng rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 100; ++i)
        for (int c = 0; c < 2; ++c) raw.window(i, c) = 9750.0 + 3.0 * c + g(rng);
    raw.target = Vec(2);
    raw.target << 9750.7, 9753.2;
    WindowSample s;
    REQUIRE(normalize_window(raw, s));

    Vec mu_bps;
    Mat sigma_bps;
    denormalize_prediction(s.target, Mat::Identity(2, 2), s.shift, s.scale, mu_bps, sigma_bps);
    CHECK(std::abs(mu_bps[0] - raw.target[0]) <= 1e-12 * std::abs(raw.target[0]));
    CHECK(std::abs(mu_bps[1] - raw.target[1]) <= 1e-12 * std::abs(raw.target[1]));
    CHECK(sigma_bps(0, 0) == doctest::Approx(s.scale * s.scale).epsilon(1e-12));

    // s=2, m=0 scales covariance by 4
    Vec mu2;
    Mat sig2;
    denormalize_prediction(Vec::Zero(2), Mat::Identity(2, 2), Vec::Zero(2), 2.0, mu2, sig2);
    CHECK(sig2(0, 0) == 4.0);
    CHECK(mu2[0] == 0.0);
}

TEST_CASE("no look-ahead: future quotes do not change earlier samples") {
    SyntheticMarketConfig cfg;
    cfg.contracts = 2;
    cfg.days = 2;
    cfg.quotes_per_day = 300;
    cfg.seed = 23;
    auto market = generate_synthetic_market(cfg);
    auto series = build_microprice_series(market.events, 2);
    CurveSeries curve = align_and_downsample(series, 0.05);
    auto base = make_samples(curve, 50);
    REQUIRE(!base.empty());
    const int64_t cut = base[base.size() / 2].target_time;

    // perturb every quote strictly after `cut` and rebuild
    auto mutated = market.events;
    for (auto& q : mutated)
        if (q.timestamp_ns > cut) {
            q.bid_price += 7.0;
            q.ask_price += 7.0;
        }
    auto series2 = build_microprice_series(mutated, 2);
    auto samples2 = make_samples(align_and_downsample(series2, 0.05), 50);
    REQUIRE(samples2.size() >= base.size() / 2);
    for (size_t i = 0; i <= base.size() / 2; ++i) {
        if (base[i].target_time > cut) break;
        CHECK(base[i].window == samples2[i].window);
        CHECK(base[i].target == samples2[i].target);
        CHECK(base[i].scale == samples2[i].scale);
    }
}

TEST_CASE("dataset month chunking and binary round trip") {
    SyntheticMarketConfig cfg;
    cfg.contracts = 2;
    cfg.days = 8;
    cfg.days_per_month = 4;
    cfg.quotes_per_day = 150;
    cfg.seed = 41;
    auto market = generate_synthetic_market(cfg);
    auto series = build_microprice_series(market.events, 2);
    auto samples = make_samples(align_and_downsample(series, 0.05), 40);
    REQUIRE(!samples.empty());
    Dataset ds = chunk_by_month(std::move(samples), 2, 40);
    CHECK(ds.months.size() == 2);
    CHECK(ds.months[0] + 1 == ds.months[1]);

    const std::string dir = "test_cs_dataset";
    save_dataset(ds, dir);
    Dataset back = load_dataset(dir);
    REQUIRE(back.months == ds.months);
    REQUIRE(back.total_samples() == ds.total_samples());
    for (size_t m = 0; m < ds.by_month.size(); ++m)
        for (size_t i = 0; i < ds.by_month[m].size(); ++i) {
            CHECK(back.by_month[m][i].window == ds.by_month[m][i].window);
            CHECK(back.by_month[m][i].target == ds.by_month[m][i].target);
            CHECK(back.by_month[m][i].scale == ds.by_month[m][i].scale);
            CHECK(back.by_month[m][i].anchor_time == ds.by_month[m][i].anchor_time);
        }
    std::filesystem::remove_all(dir);
}
