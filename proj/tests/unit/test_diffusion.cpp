#include "digzsl/cdm/cdm.hpp"
#include "digzsl/core/errors.hpp"
#include "digzsl/diffusion/generator.hpp"
#include "digzsl/prototypes/prototype_bank.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

using namespace digzsl;

namespace {

// Returns a fixed matrix regardless of input; lets loss tests plug in oracles.
class FixedDenoiser final : public Denoiser {
public:
    FixedDenoiser(std::size_t d, std::size_t c) : d_(d), c_(c) {}
    Eigen::MatrixXd output;

    std::size_t latent_dim() const override { return d_; }
    std::size_t cond_dim() const override { return c_; }
    ad::Var predict(ad::Tape& tape, const ad::Var&, const std::vector<std::size_t>&, const ad::Var&) override {
        return tape.constant(output);
    }
    Eigen::MatrixXd predict(const Eigen::MatrixXd&, const std::vector<std::size_t>&, const Eigen::MatrixXd*) const override {
        return output;
    }
    std::vector<ad::Parameter*> parameters() override { return {}; }

private:
    std::size_t d_, c_;
};

struct ToyWorld {
    ToyDataset data;
    std::shared_ptr<ToyTextEncoder> encoder;
};

ToyWorld make_world(const ImageShape& shape, std::vector<std::string> seen, std::vector<std::string> unseen) {
    ToyDatasetConfig cfg;
    cfg.seen = std::move(seen);
    cfg.unseen = std::move(unseen);
    cfg.train_per_class = 60;
    cfg.test_seen_per_class = 10;
    cfg.test_unseen_per_class = 10;
    ToyWorld w{make_toy_dataset(cfg, shape, 3), nullptr};
    std::vector<std::string> names;
    for (const auto& c : w.data.space.classes()) names.push_back(c.display_name);
    GeneratorConfig g;
    auto tpl = g.templates;
    tpl.push_back(kDefaultPrototypeTemplate);
    w.encoder = std::make_shared<ToyTextEncoder>(build_vocabulary(names, tpl), EncoderConfig{}, 11);
    return w;
}

GeneratorConfig small_generator_config() {
    GeneratorConfig g;
    g.hidden = 96;
    g.time_dim = 16;
    g.train_steps = 600;
    g.batch_size = 32;
    g.lr = 2e-3;
    return g;
}

ToyDenoiser tiny_denoiser(std::uint64_t seed, std::size_t T = 100) {
    return ToyDenoiser(NoiseSchedule::linear(T), 5, 3, 4, 6, seed);
}

}  // namespace

TEST_CASE("schedule: linear endpoints and monotone") {
    auto s = NoiseSchedule::linear(1000);
    CHECK(s.steps() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(1) == doctest::Approx(1.0 - 1e-4).epsilon(1e-12));
    CHECK(s.alpha_bar(1000) < 1e-4);
    for (std::size_t t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK_THROWS_AS(s.alpha_bar(1001), StructuralError);

    auto ts = s.sampling_timesteps(50);
    REQUIRE(ts.size() == 50);
    CHECK(ts.front() == 1000);
    CHECK(ts.back() == 20);
    CHECK(s.sampling_timesteps(1) == std::vector<std::size_t>{1000});
}

TEST_CASE("forward_noise: endpoints") {
    NoiseSchedule s({1.0, 0.5, 0.0});
    Eigen::MatrixXd z0 = testing::gaussian(7, 3, 1), eps = testing::gaussian(7, 3, 2);
    CHECK(forward_noise(z0, 1, eps, s) == z0);
    CHECK(forward_noise(z0, 3, eps, s) == eps);
    CHECK_THROWS_AS(forward_noise(z0, 0, eps, s), StructuralError);
    CHECK_THROWS_AS(forward_noise(z0, 4, eps, s), StructuralError);
    CHECK_THROWS_AS(forward_noise(z0, 1, testing::gaussian(7, 2, 2), s), StructuralError);
}

TEST_CASE("forward_noise: Monte Carlo moments within 5 standard errors") {
    NoiseSchedule s({0.5});
    const Eigen::Index d = 6, n = 10000;
    Eigen::VectorXd z0 = testing::gaussian(d, 1, 5);
    Eigen::MatrixXd eps = testing::gaussian(d, n, 6);
    Eigen::MatrixXd zt = forward_noise(z0.replicate(1, n), 1, eps, s);

    const Eigen::VectorXd mean = zt.rowwise().mean();
    const Eigen::MatrixXd centered = zt.colwise() - mean;
    const Eigen::VectorXd var = centered.array().square().rowwise().sum() / static_cast<double>(n - 1);
    const double se_mean = std::sqrt(0.5 / static_cast<double>(n));
    const double se_var = 0.5 * std::sqrt(2.0 / static_cast<double>(n - 1));
    for (Eigen::Index i = 0; i < d; ++i) {
        CHECK(std::abs(mean[i] - std::sqrt(0.5) * z0[i]) < 5 * se_mean);
        CHECK(std::abs(var[i] - 0.5) < 5 * se_var);
    }
}

TEST_CASE("denoising_loss: perfect and zero predictors") {
    auto s = NoiseSchedule::linear(50);
    Eigen::MatrixXd z0 = testing::gaussian(4, 3, 1), eps = testing::gaussian(4, 3, 2);
    std::vector<std::size_t> t{3, 17, 50};
    FixedDenoiser model(4, 2);

    model.output = eps;
    CHECK(denoising_loss(model, z0, nullptr, t, eps, s) == 0.0);
    ad::Tape tape;
    CHECK(denoising_loss(tape, model, z0, ad::Var{}, t, eps, s).scalar() == 0.0);

    model.output = Eigen::MatrixXd::Zero(4, 3);
    CHECK(denoising_loss(model, z0, nullptr, t, eps, s) == doctest::Approx(eps.squaredNorm() / 3.0).epsilon(1e-14));

    CHECK_THROWS_AS(denoising_loss(model, z0, nullptr, t, testing::gaussian(4, 2, 1), s), StructuralError);
    CHECK_THROWS_AS(denoising_loss(model, z0, nullptr, {1, 2}, eps, s), StructuralError);
}

TEST_CASE("denoising_loss: gradient against central differences") {
    auto den = tiny_denoiser(4);
    const auto& s = den.schedule();
    Eigen::MatrixXd z0 = testing::gaussian(5, 4, 1), eps = testing::gaussian(5, 4, 2);
    Eigen::MatrixXd cond = testing::gaussian(3, 4, 3);
    std::vector<std::size_t> t{1, 40, 77, 100};

    ad::Tape tape;
    ad::Var loss = denoising_loss(tape, den, z0, tape.constant(cond), t, eps, s);
    for (auto* p : den.parameters()) p->zero_grad();
    tape.backward(loss);

    ad::Parameter& w = den.net().weight(1);
    const Eigen::MatrixXd analytic = w.grad.row(2);
    const Eigen::MatrixXd base = w.value;
    Eigen::MatrixXd numeric = testing::numeric_gradient(
        [&](const Eigen::MatrixXd& row) {
            w.value.row(2) = row;
            const double v = denoising_loss(den, z0, &cond, t, eps, s);
            w.value = base;
            return v;
        },
        Eigen::MatrixXd(base.row(2)));
    CHECK(testing::relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("toy denoiser: empty conditioning equals zero conditioning") {
    auto den = tiny_denoiser(9);
    Eigen::MatrixXd z = testing::gaussian(5, 2, 1);
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 2);
    CHECK(den.predict(z, {10, 20}, nullptr) == den.predict(z, {10, 20}, &zero));
    CHECK_THROWS_AS(den.predict(z, {0, 20}, nullptr), StructuralError);
    CHECK_THROWS_AS(den.predict(z, {10}, nullptr), StructuralError);

    ad::Tape tape;
    Eigen::MatrixXd on_tape = den.predict(tape, tape.constant(z), {10, 20}, ad::Var{}).value();
    CHECK(testing::relative_error(on_tape, den.predict(z, {10, 20}, nullptr)) < 1e-14);
}

TEST_CASE("cfg_predict: endpoints, oracle and affinity") {
    auto den = tiny_denoiser(2);
    Eigen::MatrixXd z = testing::gaussian(5, 3, 7), cond = testing::gaussian(3, 3, 8);
    const std::vector<std::size_t> ts(3, 33);
    const Eigen::MatrixXd c = den.predict(z, ts, &cond);
    const Eigen::MatrixXd u = den.predict(z, ts, nullptr);

    CHECK(cfg_predict(den, z, 33, cond, 1.0) == c);
    CHECK(cfg_predict(den, z, 33, cond, 0.0) == u);

    for (double w : {0.0, 1.0, 2.5, 7.0}) {
        Eigen::MatrixXd oracle(5, 3);
        for (Eigen::Index i = 0; i < oracle.size(); ++i) oracle.data()[i] = w * c.data()[i] + (1.0 - w) * u.data()[i];
        CHECK((cfg_predict(den, z, 33, cond, w) - oracle).cwiseAbs().maxCoeff() < 1e-12);

        ad::Tape tape;
        Eigen::MatrixXd taped = cfg_predict(tape, den, tape.constant(z), 33, tape.constant(cond), w).value();
        CHECK((taped - oracle).cwiseAbs().maxCoeff() < 1e-12);
    }

    for (double w : {-1.0, 3.0, 7.0}) {
        const Eigen::MatrixXd affine = u + w * (c - u);
        CHECK((cfg_predict(den, z, 33, cond, w) - affine).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sampler: determinism, range and single step") {
    auto w = make_world({3, 4, 4}, {"red_circle", "blue_square"}, {"green_square"});
    ToyDenoiser den(NoiseSchedule::linear(1000), 48, w.encoder->output_dim(), 8, 16, 5);
    ToyGenerator gen(w.encoder, den, {3, 4, 4});
    Eigen::MatrixXd cond = gen.encode_text("a photo of a red circle").replicate(1, 3);
    SamplerSettings st;
    st.steps = 10;

    auto a = gen.sample(cond, {1, 2, 3}, st);
    auto b = gen.sample(cond, {1, 2, 3}, st);
    CHECK(a.images == b.images);
    CHECK(a.latents == b.latents);
    CHECK(a.images.minCoeff() >= 0.0);
    CHECK(a.images.maxCoeff() <= 1.0);
    CHECK(a.images.col(0) != a.images.col(1));

    // Column 0 alone matches column 0 of the batch.
    auto single = gen.sample(cond.leftCols(1), {1}, st);
    CHECK(testing::relative_error(single.latents, a.latents.leftCols(1)) < 1e-12);

    // One step: x0 estimate from pure noise, clamped, is the final latent.
    st.steps = 1;
    auto one = gen.sample(cond.leftCols(1), {42}, st);
    const auto& sched = gen.denoiser().schedule();
    const double ab = sched.alpha_bar(1000);
    Eigen::MatrixXd z = initial_noise(48, 42);
    Eigen::MatrixXd eps = cfg_predict(gen.denoiser(), z, 1000, cond.leftCols(1), st.guidance);
    Eigen::MatrixXd x0 = ((z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab)).cwiseMax(-1.0).cwiseMin(1.0);
    CHECK(testing::relative_error(one.latents, x0) < 1e-12);

    st.steps = 0;
    CHECK_THROWS_AS(gen.sample(cond.leftCols(1), {1}, st), StructuralError);
}

TEST_CASE("sampler: tape trajectory matches the plain one") {
    auto w = make_world({3, 4, 4}, {"red_circle", "blue_square"}, {"green_square"});
    ToyDenoiser den(NoiseSchedule::linear(1000), 48, w.encoder->output_dim(), 8, 16, 5);
    ToyGenerator gen(w.encoder, den, {3, 4, 4});
    Eigen::MatrixXd cond = gen.encode_text("a photo of the blue square").replicate(1, 2);
    SamplerSettings st;
    st.steps = 8;
    for (std::size_t depth : {0, 3}) {
        st.grad_depth = depth;
        ad::Tape tape;
        Eigen::MatrixXd taped = gen.sample(tape, tape.leaf(cond), {5, 6}, st).value();
        CHECK(testing::relative_error(taped, gen.sample(cond, {5, 6}, st).images) < 1e-12);
    }
}

TEST_CASE("sampler: non-finite latent reports the step") {
    auto den = tiny_denoiser(1);
    den.net().weight(2).value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    SamplerSettings st;
    st.steps = 4;
    try {
        sample_latents(den, den.schedule(), Eigen::MatrixXd::Zero(3, 1), {1}, st);
        FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
        CHECK(e.step() == 0);
    }
}

TEST_CASE("sampler: grad_depth limits which steps reach the denoiser") {
    auto w = make_world({3, 4, 4}, {"red_circle", "blue_square"}, {"green_square"});
    ToyDenoiser den(NoiseSchedule::linear(1000), 48, w.encoder->output_dim(), 8, 16, 5);
    ToyGenerator gen(w.encoder, den, {3, 4, 4});
    for (auto* p : gen.parameters()) p->trainable = true;
    Eigen::MatrixXd cond = gen.encode_text("a photo of a red circle").replicate(1, 2);
    SamplerSettings st;
    st.steps = 6;
    st.clip_x0 = false;

    for (std::size_t k : {1, 2, 6}) {
        st.grad_depth = k;
        ad::Tape tape;
        ad::Var c = tape.leaf(cond);
        tape.backward(ad::sum_squares(gen.sample(tape, c, {3, 4}, st)));
        const auto& per_tag = tape.audit().contributions.at("denoiser.w0");
        for (int step = 0; step < 6; ++step) {
            const bool recorded = step >= 6 - static_cast<int>(k);
            auto it = per_tag.find(step);
            const double g = it == per_tag.end() ? 0.0 : it->second;
            if (recorded) {
                CHECK(g > 0.0);
            } else {
                CHECK(g == 0.0);
            }
        }
        CHECK(tape.grad(c).norm() > 0.0);
    }
}

TEST_CASE("generator: prompt encoding on the tape matches the encoder") {
    auto w = make_world({3, 4, 4}, {"red_circle", "blue_square"}, {"green_square"});
    ToyDenoiser den(NoiseSchedule::linear(100), 48, w.encoder->output_dim(), 8, 16, 5);
    ToyGenerator gen(w.encoder, den, {3, 4, 4});
    const std::string prompt = "a cropped photo of a green square";
    const auto ids = w.encoder->tokenize(prompt);
    Eigen::MatrixXd emb(static_cast<Eigen::Index>(w.encoder->embed_dim()), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) emb.col(static_cast<Eigen::Index>(i)) = w.encoder->token_embedding(ids[i]);

    ad::Tape tape;
    ad::Var e = tape.leaf(emb);
    ad::Var c = gen.encode_prompt(tape, e);
    CHECK(testing::relative_error(c.value(), w.encoder->encode(prompt)) < 1e-12);
    CHECK(testing::relative_error(gen.encode_text(prompt), w.encoder->encode(prompt)) < 1e-12);

    const Eigen::VectorXd dir = testing::gaussian(c.rows(), 1, 3);
    tape.backward(ad::sum(ad::hadamard(c, tape.constant(dir))));
    Eigen::MatrixXd numeric = testing::numeric_gradient(
        [&](const Eigen::MatrixXd& x) { return dir.dot(w.encoder->encode_embeddings(x)); }, emb);
    CHECK(testing::relative_error(tape.grad(e), numeric) < 1e-6);
}

TEST_CASE("train_toy_generator: loss halves, warnings, reproducible, seen only") {
    const ImageShape shape{3, 8, 8};
    auto w = make_world(shape, {"red_circle", "blue_square"}, {"green_square"});
    auto cfg = small_generator_config();
    cfg.train_steps = 300;

    GeneratorTrainingReport rep;
    auto gen = train_toy_generator(w.data.train_seen, w.data.space, w.encoder, cfg, shape, 21, &rep);
    REQUIRE(rep.losses.size() == 300);
    const double head = std::accumulate(rep.losses.begin(), rep.losses.begin() + 30, 0.0) / 30.0;
    const double tail = std::accumulate(rep.losses.end() - 30, rep.losses.end(), 0.0) / 30.0;
    CHECK(tail <= 0.5 * head);
    CHECK(rep.warnings.empty());

    auto again = train_toy_generator(w.data.train_seen, w.data.space, w.encoder, cfg, shape, 21);
    CHECK(again.to_blob() == gen.to_blob());
    auto other = train_toy_generator(w.data.train_seen, w.data.space, w.encoder, cfg, shape, 22);
    CHECK_FALSE(other.to_blob() == gen.to_blob());

    cfg.cond_dropout = 0.0;
    cfg.train_steps = 2;
    GeneratorTrainingReport rep0;
    train_toy_generator(w.data.train_seen, w.data.space, w.encoder, cfg, shape, 21, &rep0);
    CHECK(rep0.warnings.size() == 1);

    CHECK_THROWS_AS(train_toy_generator(w.data.test_unseen, w.data.space, w.encoder, cfg, shape, 21), ProtocolViolation);
    CHECK_THROWS_AS(train_toy_generator(w.data.train_seen, w.data.space, w.encoder, cfg, {3, 4, 4}, 21), StructuralError);

    auto restored = ToyGenerator::from_blob(gen.to_blob(), w.encoder);
    CHECK(restored.to_blob() == gen.to_blob());
    CHECK(restored.tag() == gen.tag());
}

TEST_CASE("toy generator: samples score higher for their own prototype") {
    const ImageShape shape{3, 8, 8};
    auto w = make_world(shape, {"red_circle", "blue_square"}, {"green_square"});
    auto cfg = small_generator_config();
    auto gen = train_toy_generator(w.data.train_seen, w.data.space, w.encoder, cfg, shape, 5);

    auto bank = build_prototypes(w.data.space, *w.encoder);
    auto backbone = std::make_shared<ToyBackbone>(shape, 32, 9);
    CdmConfig cc;
    cc.epochs = 20;
    auto cdm = train_cdm_images(w.data.train_seen, backbone, w.data.space, bank, cc, 9);

    const std::size_t a = w.data.space.index_of("red_circle"), b = w.data.space.index_of("blue_square");
    const std::vector<std::size_t> pair{a, b};
    SamplerSettings st;
    st.steps = 25;
    for (std::size_t target : pair) {
        const std::size_t other = target == a ? b : a;
        std::vector<std::uint64_t> seeds(64);
        std::iota(seeds.begin(), seeds.end(), 1000);
        Eigen::MatrixXd cond =
            gen.encode_text(fill_name("a photo of a [name]", w.data.space.at(target).display_name)).replicate(1, 64);
        auto batch = gen.sample(cond, seeds, st);
        Eigen::MatrixXd proj = cdm.project_batch(cdm.features(batch.images));
        double own = 0, rival = 0;
        for (Eigen::Index j = 0; j < proj.cols(); ++j) {
            auto sc = class_scores(proj.col(j), bank, pair);
            own += sc.score_of(target);
            rival += sc.score_of(other);
        }
        CHECK(own > rival);
    }
}
