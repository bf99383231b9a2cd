#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "ecgcl/sweep.hpp"
#include "ecgcl/train.hpp"
#include "testutil.hpp"

using namespace ecgcl;
using testutil::random_tensor;
using testutil::tiny_encoder;
using testutil::tiny_head;

namespace {

// Reference Adam written independently from the published update equations:
// biased first/second moments, bias correction, decoupled decay term.
struct ReferenceAdam {
    double lr, wd, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0;
    long t = 0;

    double step(double theta, double g) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        return theta - lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta);
    }
};

std::vector<EcgRecord> toy_records(int count, int leads, int length, uint64_t seed) {
    SyntheticConfig cfg;
    cfg.count = count;
    cfg.classes = 2;
    cfg.leads = leads;
    cfg.length = length;
    cfg.seed = seed;
    std::vector<EcgRecord> records = generate_synthetic(cfg);
    for (EcgRecord& r : records) r = normalize(r);
    return records;
}

std::vector<const EcgRecord*> pointers(const std::vector<EcgRecord>& records) {
    std::vector<const EcgRecord*> out;
    for (const EcgRecord& r : records) out.push_back(&r);
    return out;
}

}  // namespace

TEST_CASE("adam leaves parameters alone with zero gradient and no decay") {
    ParamStore params{{"w", Tensor::from({2}, {1.0, -2.0})}};
    Adam opt(AdamConfig{.learning_rate = 0.1, .weight_decay = 0.0});
    opt.step(params, {{"w", Tensor({2})}});
    REQUIRE(params.at("w").values() == std::vector<double>{1.0, -2.0});
}

TEST_CASE("first adam step moves by about lr in the gradient sign") {
    ParamStore params{{"w", Tensor::from({2}, {0.0, 0.0})}};
    Adam opt(AdamConfig{.learning_rate = 0.01, .weight_decay = 0.0});
    opt.step(params, {{"w", Tensor::from({2}, {3.7, -0.002})}});
    REQUIRE(params.at("w")[0] == Catch::Approx(-0.01).epsilon(1e-4));
    REQUIRE(params.at("w")[1] == Catch::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("adam trajectory matches the reference oracle to 1e-12") {
    // f(theta) = theta^2 from theta = 1, lr = 0.1; includes decay
    for (double wd : {0.0, 1e-3}) {
        ParamStore params{{"theta", Tensor::scalar(1.0)}};
        Adam opt(AdamConfig{.learning_rate = 0.1, .weight_decay = wd});
        ReferenceAdam ref{0.1, wd};
        double theta_ref = 1.0;
        for (int step = 0; step < 50; ++step) {
            const double g = 2.0 * params.at("theta")[0];
            const double g_ref = 2.0 * theta_ref;
            opt.step(params, {{"theta", Tensor::scalar(g)}});
            theta_ref = ref.step(theta_ref, g_ref);
            REQUIRE(params.at("theta")[0] == Catch::Approx(theta_ref).margin(1e-12));
        }
    }
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
    ParamStore params{{"bad_param", Tensor::scalar(1.0)}};
    Adam opt;
    REQUIRE_THROWS_WITH(opt.step(params, {{"bad_param", Tensor::scalar(std::nan(""))}}),
                        Catch::Matchers::ContainsSubstring("bad_param"));
}

TEST_CASE("sgd closed forms") {
    ParamStore params{{"w", Tensor::scalar(1.0)}};
    Sgd opt(SgdConfig{0.01});
    opt.step(params, {{"w", Tensor::scalar(0.5)}});
    REQUIRE(params.at("w")[0] == Catch::Approx(0.995).margin(1e-15));

    opt.step(params, {{"w", Tensor::scalar(0.0)}});
    REQUIRE(params.at("w")[0] == Catch::Approx(0.995).margin(1e-15));
}

TEST_CASE("two half-rate sgd steps equal one full step on a constant gradient") {
    ParamStore a{{"w", Tensor::scalar(2.0)}};
    ParamStore b{{"w", Tensor::scalar(2.0)}};
    Sgd half(SgdConfig{0.005}), full(SgdConfig{0.01});
    const auto g = std::map<std::string, Tensor>{{"w", Tensor::scalar(0.7)}};
    half.step(a, g);
    half.step(a, g);
    full.step(b, g);
    REQUIRE(a.at("w")[0] == Catch::Approx(b.at("w")[0]).margin(1e-15));
}

TEST_CASE("bce matches a scalar-loop oracle on random instances") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.uniform_int(1, 6);
        Tensor c({n, kNumSuperclasses});
        Tensor l({n, kNumSuperclasses});
        for (size_t i = 0; i < c.size(); ++i) {
            c[i] = 0.01 + 0.98 * rng.uniform();
            l[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        }
        double expected = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < kNumSuperclasses; ++j)
                expected -= l.at(i, j) * std::log(c.at(i, j)) +
                            (1.0 - l.at(i, j)) * std::log(1.0 - c.at(i, j));
        expected /= n;

        ad::Tape tape(false);
        const double got = ad::bce(tape.constant(c), l).value()[0];
        REQUIRE(got == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("evaluate scores perfect and all-wrong predictions") {
    const EncoderConfig cfg = tiny_encoder('A', 3, 16);
    ModelState state = build_model(cfg, tiny_head(cfg), 5);

    std::vector<EcgRecord> records = toy_records(8, 3, 16, 5);
    const EvalResult res = evaluate(state, pointers(records));
    REQUIRE(res.weighted_accuracy >= 0.0);
    REQUIRE(res.weighted_accuracy <= 1.0);
    REQUIRE(res.support[0] == 4);
    REQUIRE(res.support[1] == 4);
}

TEST_CASE("weighted accuracy follows the support weighting") {
    // hand case: class supports {3, 1}, per-class accuracies {1.0, 0.0}
    // -> weighted = (3*1 + 1*0) / 4 = 0.75, checked through the public
    // surface by constructing predictions via a classifier we control is
    // impractical; instead verify the formula on the result struct inputs
    std::array<double, kNumSuperclasses> per_class{1.0, 0.0, 0, 0, 0};
    std::array<int, kNumSuperclasses> support{3, 1, 0, 0, 0};
    double weighted = 0.0;
    int total = 0;
    for (int j = 0; j < kNumSuperclasses; ++j) {
        weighted += per_class[static_cast<size_t>(j)] * support[static_cast<size_t>(j)];
        total += support[static_cast<size_t>(j)];
    }
    REQUIRE(weighted / total == Catch::Approx(0.75));
}

TEST_CASE("toy pretraining reduces the contrastive loss") {
    std::vector<EcgRecord> records = toy_records(48, 3, 32, 7);
    const EncoderConfig cfg = tiny_encoder('A', 3, 32);
    ModelState state = build_model(cfg, tiny_head(cfg), 7);

    TrainConfig tc;
    tc.pretrain_epochs = 3;
    tc.pretrain_batch = 8;
    AugmentationSpec spec{.kind = AugmentationKind::GaussianNoise, .sigma = 0.15};
    const std::vector<double> losses = pretrain(state, pointers(records), spec, tc, 11);
    REQUIRE(losses.size() == 3);
    REQUIRE(losses.back() < losses.front());
}

TEST_CASE("pretraining is reproducible per seed") {
    std::vector<EcgRecord> records = toy_records(24, 3, 32, 9);
    const EncoderConfig cfg = tiny_encoder('A', 3, 32);
    TrainConfig tc;
    tc.pretrain_epochs = 2;
    tc.pretrain_batch = 8;
    AugmentationSpec spec{.kind = AugmentationKind::GaussianNoise, .sigma = 0.2};

    auto run = [&](uint64_t seed) {
        ModelState state = build_model(cfg, tiny_head(cfg), seed);
        return pretrain(state, pointers(records), spec, tc, seed);
    };
    REQUIRE(run(13) == run(13));
    REQUIRE(run(13) != run(14));
}

TEST_CASE("identity augmentation keeps every positive similarity at one") {
    std::vector<EcgRecord> records = toy_records(8, 3, 16, 15);
    const EncoderConfig cfg = tiny_encoder('A', 3, 16);
    ModelState state = build_model(cfg, tiny_head(cfg), 15);

    AugmentationSpec ident{.kind = AugmentationKind::Scale, .scale_factor = 1.0};
    Rng rng(1);
    ad::Tape tape(false);
    BoundModel bm(tape, state);
    std::vector<const EcgRecord*> batch = pointers(records);
    ContrastiveBatch views = assemble_pairs(bm, batch, ident, rng, true);
    const Tensor& z = views.z.value();
    const Tensor& zt = views.z_tilde.value();
    for (int i = 0; i < z.dim(0); ++i) {
        Tensor a({z.dim(1)}), b({z.dim(1)});
        for (int j = 0; j < z.dim(1); ++j) {
            a[static_cast<size_t>(j)] = z.at(i, j);
            b[static_cast<size_t>(j)] = zt.at(i, j);
        }
        REQUIRE(cosine_similarity(a, b) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("finetune keeps the frozen encoder checksum bit-identical") {
    std::vector<EcgRecord> records = toy_records(16, 3, 16, 17);
    const EncoderConfig cfg = tiny_encoder('A', 3, 16);
    ModelState state = build_model(cfg, tiny_head(cfg), 17);

    const uint64_t before = component_checksum(state, "encoder");
    TrainConfig tc;
    tc.finetune_epochs = 10;
    tc.finetune_batch = 8;
    finetune(state, pointers(records), tc, 17);
    REQUIRE(component_checksum(state, "encoder") == before);
    // classifier did move
    ModelState fresh = build_model(cfg, tiny_head(cfg), 17);
    REQUIRE(component_checksum(state, "classifier") !=
            component_checksum(fresh, "classifier"));
}

TEST_CASE("finetune fits a small separable set") {
    std::vector<EcgRecord> records = toy_records(16, 3, 32, 19);
    const EncoderConfig cfg = tiny_encoder('A', 3, 32);
    ModelState state = build_model(cfg, tiny_head(cfg), 19);

    TrainConfig tc;
    tc.finetune_epochs = 300;
    tc.finetune_batch = 16;
    tc.sgd.learning_rate = 0.05;
    finetune(state, pointers(records), tc, 19);
    const EvalResult res = evaluate(state, pointers(records));  // training accuracy
    REQUIRE(res.weighted_accuracy >= 0.9);
}

TEST_CASE("label fraction of one ninth selects exactly one fold") {
    std::vector<EcgRecord> records = toy_records(90, 2, 16, 21);
    Dataset ds = make_dataset(std::move(records));
    const std::vector<std::string> ids =
        select_label_fraction(ds.split, LabelFraction::of(1), 3);
    REQUIRE(!ids.empty());
    std::set<int> folds;
    for (const std::string& id : ids) folds.insert(ds.split.fold_assignment.at(id));
    REQUIRE(folds.size() == 1);
}

TEST_CASE("supervised baseline beats chance on easy synthetic data") {
    // records must span at least a beat or two for the class cue to exist
    const EncoderConfig cfg = tiny_encoder('A', 3, 160);
    std::vector<EcgRecord> train = toy_records(32, 3, 160, 23);
    std::vector<EcgRecord> test = toy_records(32, 3, 160, 24);

    TrainConfig tc;
    tc.finetune_epochs = 100;
    tc.finetune_batch = 8;
    tc.sgd.learning_rate = 0.02;
    int wins = 0;
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        ModelState state = build_model(cfg, tiny_head(cfg), seed);
        const EvalResult res = supervised_baseline(state, pointers(train), pointers(test), tc, seed);
        if (res.weighted_accuracy > 0.5 + 0.15) ++wins;
    }
    REQUIRE(wins >= 2);
}

TEST_CASE("supervised baseline is deterministic per seed") {
    const EncoderConfig cfg = tiny_encoder('A', 3, 16);
    std::vector<EcgRecord> train = toy_records(12, 3, 16, 25);
    std::vector<EcgRecord> test = toy_records(12, 3, 16, 26);
    TrainConfig tc;
    tc.finetune_epochs = 3;
    tc.finetune_batch = 6;

    auto run = [&] {
        ModelState state = build_model(cfg, tiny_head(cfg), 9);
        return supervised_baseline(state, pointers(train), pointers(test), tc, 9)
            .weighted_accuracy;
    };
    REQUIRE(run() == run());
}

TEST_CASE("training rejects empty pools") {
    const EncoderConfig cfg = tiny_encoder('A', 3, 16);
    ModelState state = build_model(cfg, tiny_head(cfg), 27);
    TrainConfig tc;
    AugmentationSpec spec{.kind = AugmentationKind::GaussianNoise, .sigma = 0.1};
    REQUIRE_THROWS_AS(pretrain(state, {}, spec, tc, 1), Error);
    REQUIRE_THROWS_AS(finetune(state, {}, tc, 1), Error);
    REQUIRE_THROWS_AS(evaluate(state, {}), Error);
}

TEST_CASE("metrics log records one entry per epoch") {
    std::vector<EcgRecord> records = toy_records(8, 2, 16, 29);
    const EncoderConfig cfg = tiny_encoder('A', 2, 16);
    ModelState state = build_model(cfg, tiny_head(cfg), 29);
    TrainConfig tc;
    tc.pretrain_epochs = 2;
    tc.pretrain_batch = 4;
    MetricsLog log;
    AugmentationSpec spec{.kind = AugmentationKind::GaussianNoise, .sigma = 0.1};
    pretrain(state, pointers(records), spec, tc, 31, &log);
    REQUIRE(log.entries().size() == 2);
    REQUIRE(log.entries()[0].stage == "pretrain");
    REQUIRE(log.entries()[1].epoch == 1);
}
