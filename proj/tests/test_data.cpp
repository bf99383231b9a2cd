#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "ecgcl/data.hpp"
#include "testutil.hpp"

using namespace ecgcl;
using testutil::random_tensor;

namespace {

EcgRecord make_record(Tensor signal, const std::string& id = "r") {
    EcgRecord r;
    r.signal = std::move(signal);
    r.record_id = id;
    return r;
}

// independent period estimator: autocorrelation peak over plausible lags
double autocorrelation_period(const double* x, int n, int min_lag, int max_lag) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += x[i];
    mean /= n;
    double best = -1e300;
    int best_lag = min_lag;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (int i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
        acc /= (n - lag);
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    return best_lag;
}

}  // namespace

TEST_CASE("normalize zeroes a constant lead and reports it") {
    EcgRecord r = make_record(Tensor({1, 4}, 1.0));
    std::vector<int> warned;
    EcgRecord out = normalize(r, &warned);
    REQUIRE(out.signal.values() == std::vector<double>{0, 0, 0, 0});
    REQUIRE(warned == std::vector<int>{0});
}

TEST_CASE("normalize standardizes a two-point lead") {
    EcgRecord r = make_record(Tensor::from({1, 2}, {0.0, 2.0}));
    EcgRecord out = normalize(r);
    REQUIRE(out.signal[0] == Catch::Approx(-1.0).margin(1e-6));
    REQUIRE(out.signal[1] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("normalize produces zero mean unit variance per lead") {
    Rng rng(3);
    EcgRecord r = make_record(random_tensor({4, 500}, rng, 3.0));
    for (size_t i = 0; i < r.signal.size(); ++i) r.signal[i] += 7.0;
    EcgRecord out = normalize(r);
    for (int lead = 0; lead < 4; ++lead) {
        double mu = 0.0, var = 0.0;
        for (int i = 0; i < 500; ++i) mu += out.signal.at(lead, i);
        mu /= 500;
        for (int i = 0; i < 500; ++i)
            var += (out.signal.at(lead, i) - mu) * (out.signal.at(lead, i) - mu);
        var /= 500;
        REQUIRE(std::abs(mu) < 1e-9);
        REQUIRE(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    }
}

TEST_CASE("normalize is idempotent") {
    Rng rng(5);
    EcgRecord r = make_record(random_tensor({3, 64}, rng, 2.0));
    EcgRecord once = normalize(r);
    EcgRecord twice = normalize(once);
    for (size_t i = 0; i < once.signal.size(); ++i)
        REQUIRE(twice.signal[i] == Catch::Approx(once.signal[i]).margin(1e-6));
}

TEST_CASE("normalize rejects non-finite input") {
    EcgRecord r = make_record(Tensor({1, 4}));
    r.signal[2] = std::nan("");
    REQUIRE_THROWS_AS(normalize(r), Error);
}

TEST_CASE("split_folds with one id per fold") {
    std::vector<std::string> ids;
    std::map<std::string, int> folds;
    for (int f = 1; f <= 10; ++f) {
        const std::string id = "id" + std::to_string(f);
        ids.push_back(id);
        folds[id] = f;
    }
    DatasetSplit split = split_folds(ids, folds);
    REQUIRE(split.test_ids == std::vector<std::string>{"id10"});
    REQUIRE(split.pretrain_ids.size() == 9);
    REQUIRE(split.finetune_ids.size() == 9);
    REQUIRE(split.pretrain_ids.size() + split.test_ids.size() == ids.size());
}

TEST_CASE("split_folds with everything in the test fold") {
    std::vector<std::string> ids{"a", "b"};
    std::map<std::string, int> folds{{"a", 10}, {"b", 10}};
    DatasetSplit split = split_folds(ids, folds);
    REQUIRE(split.pretrain_ids.empty());
    REQUIRE(split.test_ids.size() == 2);
}

TEST_CASE("split_folds rejects a missing assignment naming the id") {
    std::vector<std::string> ids{"a", "mystery"};
    std::map<std::string, int> folds{{"a", 1}};
    REQUIRE_THROWS_WITH(split_folds(ids, folds), Catch::Matchers::ContainsSubstring("mystery"));
}

TEST_CASE("split_folds partitions the input") {
    Rng rng(7);
    std::vector<std::string> ids;
    std::map<std::string, int> folds;
    for (int i = 0; i < 200; ++i) {
        const std::string id = "r" + std::to_string(i);
        ids.push_back(id);
        folds[id] = rng.uniform_int(1, 10);
    }
    DatasetSplit split = split_folds(ids, folds);
    std::set<std::string> all(split.pretrain_ids.begin(), split.pretrain_ids.end());
    for (const std::string& id : split.test_ids) {
        REQUIRE(all.count(id) == 0);
        all.insert(id);
    }
    REQUIRE(all.size() == ids.size());
}

TEST_CASE("label fraction selects whole folds deterministically") {
    std::vector<std::string> ids;
    std::map<std::string, int> folds;
    for (int f = 1; f <= 9; ++f)
        for (int i = 0; i < 100; ++i) {
            const std::string id = "f" + std::to_string(f) + "_" + std::to_string(i);
            ids.push_back(id);
            folds[id] = f;
        }
    DatasetSplit split = split_folds(ids, folds);

    const auto full = select_label_fraction(split, LabelFraction::of(9), 42);
    REQUIRE(full.size() == 900);

    const auto one = select_label_fraction(split, LabelFraction::of(1), 42);
    REQUIRE(one.size() == 100);
    REQUIRE(one == select_label_fraction(split, LabelFraction::of(1), 42));

    const auto four = select_label_fraction(split, LabelFraction::of(4), 42);
    REQUIRE(four.size() == 400);

    // monotone under the same seed: 1/9 subset of 4/9 subset of 9/9
    std::set<std::string> four_set(four.begin(), four.end());
    for (const std::string& id : one) REQUIRE(four_set.count(id) == 1);
    std::set<std::string> full_set(full.begin(), full.end());
    for (const std::string& id : four) REQUIRE(full_set.count(id) == 1);

    REQUIRE_THROWS_AS(LabelFraction::of(5), Error);
}

TEST_CASE("synthetic generator honors the shape contract") {
    SyntheticConfig cfg;
    cfg.count = 4;
    cfg.classes = 2;
    cfg.leads = 12;
    cfg.length = 1000;
    const std::vector<EcgRecord> records = generate_synthetic(cfg);
    REQUIRE(records.size() == 4);
    for (const EcgRecord& r : records) {
        REQUIRE(r.signal.shape() == Shape{12, 1000});
        REQUIRE(r.signal.all_finite());
        REQUIRE(r.labels.has_value());
        REQUIRE(r.labels->any());
        REQUIRE(r.fold >= 1);
        REQUIRE(r.fold <= 10);
    }
    REQUIRE(records[0].labels->test(0));
    REQUIRE(records[1].labels->test(1));
}

TEST_CASE("synthetic generation is bitwise deterministic per seed") {
    SyntheticConfig cfg;
    cfg.count = 6;
    cfg.leads = 3;
    cfg.length = 200;
    cfg.seed = 99;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].signal == b[i].signal);
        REQUIRE(a[i].record_id == b[i].record_id);
    }
    cfg.seed = 100;
    const auto c = generate_synthetic(cfg);
    REQUIRE_FALSE(a[0].signal == c[0].signal);
}

TEST_CASE("class beat rates differ by the configured margin") {
    SyntheticConfig cfg;
    cfg.count = 40;
    cfg.classes = 2;
    cfg.leads = 2;
    cfg.length = 1000;
    cfg.seed = 11;
    const std::vector<EcgRecord> records = generate_synthetic(cfg);

    // lag window sits above the T-wave echo and below twice the shortest
    // period, so the first autocorrelation peak wins
    double period[2] = {0.0, 0.0};
    int count[2] = {0, 0};
    for (const EcgRecord& r : records) {
        const int cls = r.labels->test(0) ? 0 : 1;
        period[cls] +=
            autocorrelation_period(r.signal.data(), cfg.length, 40, 125);
        count[cls] += 1;
    }
    period[0] /= count[0];
    period[1] /= count[1];

    const double fs = cfg.sampling_rate;
    const double expected0 = cfg.base_period_s * fs;                       // 100 samples
    const double expected1 = (cfg.base_period_s - cfg.period_step_s) * fs; // 75 samples
    REQUIRE(std::abs(period[0] - expected0) < 6.0);
    REQUIRE(std::abs(period[1] - expected1) < 6.0);
    REQUIRE(std::abs((period[0] - period[1]) - cfg.period_step_s * fs) < 8.0);
}

TEST_CASE("synthetic generator validates its inputs") {
    SyntheticConfig cfg;
    cfg.count = 0;
    REQUIRE_THROWS_AS(generate_synthetic(cfg), Error);
    cfg.count = 1;
    cfg.classes = 1;
    REQUIRE_THROWS_AS(generate_synthetic(cfg), Error);
    cfg.classes = 6;
    REQUIRE_THROWS_AS(generate_synthetic(cfg), Error);
}
