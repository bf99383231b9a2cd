#include <catch2/catch_amalgamated.hpp>

#include "ecgcl/contrastive.hpp"
#include "testutil.hpp"

using namespace ecgcl;
using testutil::random_tensor;
using testutil::tiny_encoder;
using testutil::tiny_head;

namespace {

// Independent brute-force evaluation of the contrastive loss: plain loops
// over all 2N anchors, denominator over the other 2N-1 embeddings.
double nt_xent_bruteforce(const Tensor& z, const Tensor& zt, double tau) {
    const int n = z.dim(0), k = z.dim(1);
    std::vector<std::vector<double>> pool;
    for (int i = 0; i < n; ++i)
        pool.emplace_back(z.data() + static_cast<size_t>(i) * k, z.data() + static_cast<size_t>(i + 1) * k);
    for (int i = 0; i < n; ++i)
        pool.emplace_back(zt.data() + static_cast<size_t>(i) * k, zt.data() + static_cast<size_t>(i + 1) * k);

    auto cos = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (size_t j = 0; j < a.size(); ++j) {
            dot += a[j] * b[j];
            na += a[j] * a[j];
            nb += b[j] * b[j];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    const int total = 2 * n;
    double loss = 0.0;
    for (int i = 0; i < total; ++i) {
        const int pos = (i + n) % total;
        double denom = 0.0;
        for (int kk = 0; kk < total; ++kk)
            if (kk != i) denom += std::exp(cos(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(kk)]) / tau);
        loss += -std::log(std::exp(cos(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(pos)]) / tau) / denom);
    }
    return loss / total;
}

}  // namespace

TEST_CASE("plain cosine similarity endpoints") {
    const Tensor v = Tensor::from({3}, {1, 2, 3});
    REQUIRE(cosine_similarity(v, v) == Catch::Approx(1.0));
    Tensor nv = v;
    for (size_t i = 0; i < nv.size(); ++i) nv[i] = -nv[i];
    REQUIRE(cosine_similarity(v, nv) == Catch::Approx(-1.0));
    REQUIRE(cosine_similarity(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})) ==
            Catch::Approx(0.0).margin(1e-12));
    REQUIRE_THROWS_AS(cosine_similarity(Tensor({3}), v), Error);
}

TEST_CASE("single-pair batch has exactly zero loss") {
    Rng rng(2);
    const Tensor z = random_tensor({1, 4}, rng);
    const Tensor zt = random_tensor({1, 4}, rng);
    REQUIRE(std::abs(nt_xent_value(z, zt, 0.1)) < 1e-9);
}

TEST_CASE("uniform embeddings give ln(2N-1) at any temperature") {
    for (int n : {2, 4, 8}) {
        for (double tau : {0.05, 0.1, 0.5}) {
            Tensor z({n, 3});
            for (int i = 0; i < n; ++i) {
                z.at(i, 0) = 0.3;
                z.at(i, 1) = -0.7;
                z.at(i, 2) = 0.2;
            }
            const double loss = nt_xent_value(z, z, tau);
            CAPTURE(n, tau);
            REQUIRE(loss == Catch::Approx(std::log(2.0 * n - 1.0)).margin(1e-6));
        }
    }
}

TEST_CASE("orthogonal two-pair batch matches the hand value") {
    Tensor z({2, 2});
    z.at(0, 0) = 1.0;
    z.at(1, 1) = 1.0;
    const double loss = nt_xent_value(z, z, 1.0);
    // every anchor sees positive similarity 1 and two zero-similarity
    // negatives: per-anchor loss -ln(e / (e + 2)) = 0.551445 (value frozen
    // from the brute-force oracle below)
    REQUIRE(loss == Catch::Approx(0.551445).margin(1e-4));
    REQUIRE(loss == Catch::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 2.0))).margin(1e-12));
    REQUIRE(loss == Catch::Approx(nt_xent_bruteforce(z, z, 1.0)).margin(1e-12));
}

TEST_CASE("loss agrees with the brute-force oracle on random batches") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = rng.uniform_int(2, 5);
        const int k = rng.uniform_int(2, 6);
        const double tau = 0.05 + rng.uniform() * 0.95;
        const Tensor z = random_tensor({n, k}, rng);
        const Tensor zt = random_tensor({n, k}, rng);
        REQUIRE(nt_xent_value(z, zt, tau) ==
                Catch::Approx(nt_xent_bruteforce(z, zt, tau)).margin(1e-12));
    }
}

TEST_CASE("loss is invariant to batch order") {
    Rng rng(7);
    const int n = 4, k = 5;
    Tensor z = random_tensor({n, k}, rng);
    Tensor zt = random_tensor({n, k}, rng);
    const double base = nt_xent_value(z, zt, 0.2);

    const std::vector<int> perm{2, 0, 3, 1};
    Tensor zp({n, k}), ztp({n, k});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
            zp.at(i, j) = z.at(perm[static_cast<size_t>(i)], j);
            ztp.at(i, j) = zt.at(perm[static_cast<size_t>(i)], j);
        }
    REQUIRE(nt_xent_value(zp, ztp, 0.2) == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("loss is invariant to positive embedding scale") {
    Rng rng(9);
    Tensor z = random_tensor({3, 4}, rng);
    Tensor zt = random_tensor({3, 4}, rng);
    const double base = nt_xent_value(z, zt, 0.1);
    for (size_t i = 0; i < z.size(); ++i) z[i] *= 17.5;
    for (size_t i = 0; i < zt.size(); ++i) zt[i] *= 17.5;
    REQUIRE(nt_xent_value(z, zt, 0.1) == Catch::Approx(base).margin(1e-9));
}

TEST_CASE("loss is non-negative when positives dominate") {
    // positive similarity is maximal per anchor: clustered pairs
    Tensor z({2, 2}), zt({2, 2});
    z.at(0, 0) = 1.0;
    zt.at(0, 0) = 1.0;  // pair 0 on +x
    z.at(1, 1) = 1.0;
    zt.at(1, 1) = 1.0;  // pair 1 on +y
    REQUIRE(nt_xent_value(z, zt, 0.1) >= 0.0);
}

TEST_CASE("nt_xent gradient matches finite differences") {
    Rng rng(11);
    auto res = testutil::check_gradients(
        [](ad::Tape& t, std::vector<ad::Var>& v) { return nt_xent(v[0], v[1], 0.3); },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    REQUIRE(res.max_rel_error < 1e-6);
}

TEST_CASE("nt_xent validates its inputs") {
    Rng rng(13);
    const Tensor z = random_tensor({2, 3}, rng);
    ad::Tape tape;
    REQUIRE_THROWS_AS(nt_xent(tape.constant(z), tape.constant(random_tensor({3, 3}, rng)), 0.1),
                      Error);
    REQUIRE_THROWS_AS(nt_xent(tape.constant(z), tape.constant(z), 0.0), Error);
    Tensor zero({2, 3});
    REQUIRE_THROWS_AS(nt_xent(tape.constant(zero), tape.constant(zero), 0.1), Error);
}

TEST_CASE("assemble_pairs embeds both branches with index-aligned positives") {
    SyntheticConfig scfg;
    scfg.count = 4;
    scfg.classes = 2;
    scfg.leads = 3;
    scfg.length = 16;
    std::vector<EcgRecord> records = generate_synthetic(scfg);
    for (EcgRecord& r : records) r = normalize(r);
    std::vector<const EcgRecord*> batch;
    for (const EcgRecord& r : records) batch.push_back(&r);

    const EncoderConfig cfg = tiny_encoder('A');
    ModelState state = build_model(cfg, tiny_head(cfg), 3);

    // identity augmentation: both branches see the same inputs, so each
    // positive similarity is exactly 1
    AugmentationSpec ident{.kind = AugmentationKind::Scale, .scale_factor = 1.0};
    Rng rng(17);
    ad::Tape tape(false);
    BoundModel bm(tape, state);
    ContrastiveBatch views = assemble_pairs(bm, batch, ident, rng, false);
    REQUIRE(views.z.value().shape() == views.z_tilde.value().shape());
    const Tensor& zv = views.z.value();
    const Tensor& ztv = views.z_tilde.value();
    for (int i = 0; i < zv.dim(0); ++i) {
        Tensor a({zv.dim(1)}), b({zv.dim(1)});
        for (int j = 0; j < zv.dim(1); ++j) {
            a[static_cast<size_t>(j)] = zv.at(i, j);
            b[static_cast<size_t>(j)] = ztv.at(i, j);
        }
        REQUIRE(cosine_similarity(a, b) == Catch::Approx(1.0).margin(1e-12));
    }

    // determinism under the seed
    auto embed = [&](uint64_t seed) {
        AugmentationSpec noise{.kind = AugmentationKind::GaussianNoise, .sigma = 0.3};
        Rng r2(seed);
        ad::Tape t2(false);
        BoundModel bm2(t2, state);
        ContrastiveBatch v2 = assemble_pairs(bm2, batch, noise, r2, false);
        return v2.z_tilde.value();
    };
    REQUIRE(embed(23) == embed(23));
    REQUIRE_FALSE(embed(23) == embed(24));

    // a batch of two means one positive and two negatives per anchor
    std::vector<const EcgRecord*> two{batch[0], batch[1]};
    Rng r3(29);
    ad::Tape t3(false);
    BoundModel bm3(t3, state);
    ContrastiveBatch v3 = assemble_pairs(bm3, batch, ident, r3, false);
    REQUIRE(v3.z.value().dim(0) + v3.z_tilde.value().dim(0) == 8);  // 2N anchors

    std::vector<const EcgRecord*> one{batch[0]};
    Rng r4(31);
    ad::Tape t4(false);
    BoundModel bm4(t4, state);
    REQUIRE_THROWS_AS(assemble_pairs(bm4, one, ident, r4, false), Error);
}
