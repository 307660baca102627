#include "digzsl/cdm/cdm.hpp"
#include "digzsl/core/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace digzsl;

namespace {

PrototypeBank bank_from(const ClassSpace& space, const Eigen::MatrixXd& vectors) {
    PrototypeBank bank;
    bank.vectors = vectors;
    for (const auto& c : space.classes()) bank.class_ids.push_back(c.id);
    bank.prompt_template = "A photo of a [name]";
    bank.encoder_tag = "test";
    return bank;
}

ClassSpace small_space(std::size_t seen, std::size_t unseen) {
    std::vector<ClassInfo> classes;
    for (std::size_t i = 0; i < seen + unseen; ++i) {
        std::string id = "k" + std::to_string(i);
        classes.push_back({id, id, i < seen});
    }
    return ClassSpace(classes);
}

// Features: the class prototype direction (padded into d dims) plus noise.
LabeledSet separable_features(const ClassSpace& space, const std::vector<std::size_t>& classes, std::size_t per_class,
                              std::size_t d, std::uint64_t seed) {
    LabeledSet s;
    s.data.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(classes.size() * per_class));
    Eigen::MatrixXd noise = testing::gaussian(s.data.rows(), s.data.cols(), seed, 0.1);
    Eigen::Index col = 0;
    for (std::size_t c : classes) {
        for (std::size_t i = 0; i < per_class; ++i, ++col) {
            s.data.col(col) = noise.col(col);
            s.data(static_cast<Eigen::Index>(c), col) += 1.0;
            s.labels.push_back(c);
            s.ids.push_back(space.id(c) + "/" + std::to_string(i));
        }
    }
    return s;
}

long double lse_oracle(const Eigen::VectorXd& z) {
    long double m = z.maxCoeff(), acc = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) acc += std::exp(static_cast<long double>(z[i]) - m);
    return m + std::log(acc);
}

}  // namespace

TEST_CASE("project: identity, zero and dense oracle") {
    auto backbone = std::make_shared<IdentityBackbone>(6);
    ad::Mlp single("projector", {6, 6}, 1);
    single.weight(0).value = Eigen::MatrixXd::Identity(6, 6);
    single.bias(0).value.setZero();
    CdmModel identity(backbone, single, 1.0);
    Eigen::VectorXd f = testing::gaussian(6, 1, 2);
    CHECK(identity.project(f) == f);
    CHECK(identity.project(Eigen::VectorXd::Zero(6)).isZero(0.0));

    auto model = CdmModel::with_default_projector(backbone, 4, 0.05, 3);
    const auto& p = model.projector();
    Eigen::VectorXd h = p.weight(0).value * f + p.bias(0).value;
    h = h.cwiseMax(0.0);
    Eigen::VectorXd expected = p.weight(1).value * h + p.bias(1).value;
    CHECK((model.project(f) - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(model.project(f).size() == 4);
    CHECK(p.weight(0).value.rows() == 8);
    CHECK_THROWS_AS(model.project(Eigen::VectorXd::Zero(5)), StructuralError);
    CHECK_THROWS_AS(CdmModel(backbone, single, 0.0), StructuralError);
}

TEST_CASE("class scores: orthogonal prototypes, singletons and brute force") {
    auto space = small_space(3, 0);
    auto bank = bank_from(space, Eigen::MatrixXd::Identity(3, 3));
    auto s = class_scores(Eigen::Vector3d(0, 2, 0), bank, {0, 1, 2});
    CHECK(s.scores[0] == 0.0);
    CHECK(s.scores[1] == 1.0);
    CHECK(s.scores[2] == 0.0);
    CHECK(s.argmax() == 1);
    auto one = class_scores(Eigen::Vector3d(1, 1, 0), bank, {2});
    CHECK(one.size() == 1);
    CHECK(ce_loss(one, 2, 1.0) == 0.0);
    CHECK_THROWS_AS(class_scores(Eigen::Vector3d::Zero(), bank, {0}), DegenerateInput);
    CHECK_THROWS_AS(class_scores(Eigen::Vector3d(1, 0, 0), bank, {}), StructuralError);

    auto tie = class_scores(Eigen::Vector3d(1, 1, 0), bank, {1, 0});
    CHECK(tie.argmax() == 0);

    auto five = small_space(5, 0);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto rbank = bank_from(five, testing::gaussian(16, 5, seed));
        Eigen::VectorXd a = testing::gaussian(16, 1, 1000 + seed);
        auto scores = class_scores(a, rbank, {0, 1, 2, 3, 4});
        std::size_t best = 0;
        double best_score = -2.0;
        for (std::size_t c = 0; c < 5; ++c) {
            const Eigen::VectorXd v = rbank.vectors.col(static_cast<Eigen::Index>(c));
            const double oracle = a.dot(v) / std::sqrt(a.squaredNorm() * v.squaredNorm());
            CHECK(std::abs(scores.scores[static_cast<Eigen::Index>(c)] - oracle) < 1e-12);
            if (oracle > best_score) {
                best_score = oracle;
                best = c;
            }
        }
        CHECK(scores.argmax() == best);
        CHECK(class_scores(7.5 * a, rbank, {0, 1, 2, 3, 4}).argmax() == best);
    }
}

TEST_CASE("ce_loss values") {
    ClassScores two{{0, 1}, Eigen::Vector2d(0.4, 0.4)};
    CHECK(ce_loss(two, 1, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(ce_loss(two, 0, 0.05) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(ce_loss(two, 5, 1.0), StructuralError);
    CHECK_THROWS_AS(ce_loss(two, 0, 0.0), StructuralError);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Eigen::VectorXd s = testing::gaussian(4, 1, seed).array().tanh();
        ClassScores cs{{0, 1, 2, 3}, s};
        for (double tau : {1.0, 0.05}) {
            const Eigen::VectorXd z = s / tau;
            const auto oracle = static_cast<double>(lse_oracle(z) - static_cast<long double>(z[2]));
            CHECK(std::abs(ce_loss(cs, 2, tau) - oracle) < 1e-10);
        }
    }
    std::vector<ClassScores> batch{two, ClassScores{{0, 1}, Eigen::Vector2d(1.0, 0.0)}};
    CHECK(ce_loss(batch, {0, 0}, 1.0) == doctest::Approx((std::log(2.0) + std::log(1.0 + std::exp(-1.0))) / 2.0));
}

TEST_CASE("train_cdm defaults echo the published settings") {
    CdmConfig cfg;
    CHECK(cfg.opt.lr == 1e-3);
    CHECK(cfg.opt.beta1 == 0.5);
    CHECK(cfg.opt.beta2 == 0.999);
    CHECK(cfg.opt.batch_size == 64);
    CHECK(cfg.input_size == 224);
    CHECK(!cfg.finetune);
}

TEST_CASE("train_cdm separates linearly separable features within 200 steps") {
    auto space = small_space(3, 1);
    auto bank = bank_from(space, Eigen::MatrixXd::Identity(4, 4));
    auto data = separable_features(space, {0, 1, 2}, 40, 8, 5);
    CdmConfig cfg;
    cfg.epochs = 100;  // 120 records / batch 64 -> 2 steps per epoch
    cfg.holdout_fraction = 0.0;
    auto model = train_cdm(data, std::make_shared<IdentityBackbone>(8), space, bank, cfg, 11);
    CHECK(model.meta().final_seen_accuracy == 1.0);
    CHECK(cdm_accuracy(model, data, bank, space.seen()) == 1.0);
    CHECK(model.meta().touched_labels[3] == 0);
    CHECK(model.meta().touched_labels[0] == 40 * 100);
}

TEST_CASE("single seen class: zero gradients, only weight decay moves parameters") {
    auto space = small_space(1, 1);
    auto bank = bank_from(space, Eigen::MatrixXd::Identity(2, 2));
    auto data = separable_features(space, {0}, 10, 4, 8);
    CdmConfig cfg;
    cfg.epochs = 3;
    cfg.holdout_fraction = 0.0;
    cfg.opt.batch_size = 4;  // 3 steps per epoch
    auto backbone = std::make_shared<IdentityBackbone>(4);
    auto init = CdmModel::with_default_projector(backbone, 2, cfg.tau, 21);
    auto model = train_cdm(data, backbone, space, bank, cfg, 21);
    const double decay = std::pow(1.0 - cfg.opt.lr * cfg.opt.weight_decay, 9.0);
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK((model.projector().weight(l).value - decay * init.projector().weight(l).value).cwiseAbs().maxCoeff() <
              1e-15);
        CHECK((model.projector().bias(l).value - decay * init.projector().bias(l).value).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("firewall: unseen-labeled records are refused") {
    auto space = small_space(2, 1);
    auto bank = bank_from(space, Eigen::MatrixXd::Identity(3, 3));
    auto data = separable_features(space, {0, 1, 2}, 3, 3, 1);
    try {
        train_cdm(data, std::make_shared<IdentityBackbone>(3), space, bank, CdmConfig{}, 1);
        FAIL("expected a protocol violation");
    } catch (const ProtocolViolation& e) {
        CHECK(std::string(e.what()).find("k2") != std::string::npos);
    }
    CHECK_THROWS_AS(train_cdm_images(data, std::make_shared<IdentityBackbone>(3), space, bank, CdmConfig{}, 1),
                    ProtocolViolation);
}

TEST_CASE("frozen backbone is bitwise unchanged; fine-tune trains a copy") {
    ToyDatasetConfig toy;
    toy.train_per_class = 6;
    toy.test_seen_per_class = 1;
    toy.test_unseen_per_class = 1;
    ImageShape shape{3, 8, 8};
    auto data = make_toy_dataset(toy, shape, 3);
    Eigen::MatrixXd vectors = testing::gaussian(6, static_cast<Eigen::Index>(data.space.size()), 4);
    auto bank = bank_from(data.space, vectors);
    auto backbone = std::make_shared<ToyBackbone>(shape, 12, 9);
    const Eigen::MatrixXd before = backbone->weight().value;
    CdmConfig cfg;
    cfg.epochs = 3;
    auto model = train_cdm_images(data.train_seen, backbone, data.space, bank, cfg, 5);
    CHECK(backbone->weight().value == before);
    CHECK(backbone->frozen());
    CHECK(!model.meta().finetuned);

    cfg.finetune = true;
    auto tuned = train_cdm_images(data.train_seen, backbone, data.space, bank, cfg, 5);
    CHECK(backbone->weight().value == before);
    CHECK(tuned.meta().finetuned);
    CHECK(tuned.backbone().frozen());
    CHECK(dynamic_cast<ToyBackbone&>(tuned.backbone()).weight().value != before);
}

TEST_CASE("ce_loss gradient w.r.t. projector parameters matches finite differences") {
    auto space = small_space(3, 0);
    auto bank = bank_from(space, testing::gaussian(8, 3, 40));
    auto backbone = std::make_shared<IdentityBackbone>(8);
    const Eigen::MatrixXd x = testing::gaussian(8, 5, 41);
    const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
    for (double tau : {1.0, 0.05}) {
        auto model = CdmModel::with_default_projector(backbone, 8, tau, 42);
        const Eigen::MatrixXd protos = bank.normalized({0, 1, 2});
        ad::Tape tape;
        ad::Var scores = model.score_images(tape, tape.constant(x), protos);
        tape.backward(ad::cross_entropy(scores, labels, 1.0 / tau));

        for (std::size_t l = 0; l < 2; ++l) {
            ad::Parameter& w = model.projector().weight(l);
            auto value = [&](const Eigen::MatrixXd& candidate) {
                Eigen::MatrixXd keep = w.value;
                w.value = candidate;
                std::vector<ClassScores> batch;
                for (Eigen::Index j = 0; j < x.cols(); ++j) {
                    batch.push_back(class_scores(model.project(x.col(j)), bank, {0, 1, 2}));
                }
                w.value = keep;
                return ce_loss(batch, labels, tau);
            };
            CHECK(testing::relative_error(w.grad, testing::numeric_gradient(value, w.value)) < 1e-4);
        }
    }
}

TEST_CASE("cdm_accuracy is a macro average") {
    auto space = small_space(2, 0);
    auto bank = bank_from(space, Eigen::MatrixXd::Identity(2, 2));
    ad::Mlp single("projector", {2, 2}, 1);
    single.weight(0).value = Eigen::MatrixXd::Identity(2, 2);
    single.bias(0).value.setZero();
    CdmModel model(std::make_shared<IdentityBackbone>(2), single, 1.0);

    LabeledSet set;
    set.data.resize(2, 11);
    for (int i = 0; i < 10; ++i) {
        set.data.col(i) = Eigen::Vector2d(1.0, 0.1);
        set.labels.push_back(0);
    }
    set.data.col(10) = Eigen::Vector2d(1.0, 0.2);
    set.labels.push_back(1);
    CHECK(cdm_accuracy(model, set, bank, {0, 1}) == 0.5);
    set.data.col(10) = Eigen::Vector2d(0.0, 1.0);
    CHECK(cdm_accuracy(model, set, bank, {0, 1}) == 1.0);
    CHECK_THROWS_AS(cdm_accuracy(model, LabeledSet{}, bank, {0, 1}), DegenerateInput);

    auto three = small_space(3, 0);
    auto rbank = bank_from(three, testing::gaussian(2, 3, 77));
    LabeledSet random;
    random.data = testing::gaussian(2, 60, 78);
    std::mt19937_64 rng(79);
    for (int i = 0; i < 60; ++i) random.labels.push_back(rng() % 3);
    std::map<std::size_t, std::pair<int, int>> tally;
    for (int i = 0; i < 60; ++i) {
        std::size_t best = 0;
        double bs = -2;
        for (std::size_t c = 0; c < 3; ++c) {
            const double s = cosine(random.data.col(i), rbank.vectors.col(static_cast<Eigen::Index>(c)));
            if (s > bs) {
                bs = s;
                best = c;
            }
        }
        auto& t = tally[random.labels[static_cast<std::size_t>(i)]];
        t.second += 1;
        t.first += best == random.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    double oracle = 0;
    for (auto& [c, t] : tally) oracle += static_cast<double>(t.first) / t.second;
    oracle /= static_cast<double>(tally.size());
    CHECK(cdm_accuracy(model, random, rbank, {0, 1, 2}) == oracle);
}

TEST_CASE("cdm checkpoint round trip") {
    auto space = small_space(2, 1);
    auto bank = bank_from(space, Eigen::MatrixXd::Identity(3, 3));
    auto data = separable_features(space, {0, 1}, 5, 3, 2);
    CdmConfig cfg;
    cfg.epochs = 2;
    auto model = train_cdm(data, std::make_shared<ToyBackbone>(ImageShape{1, 1, 3}, 3, 4), space, bank, cfg, 3);
    ArtifactStore store(testing::fresh_dir("cdm-store"));
    store.save("cdm", "model", model.to_blob(), "h", 3);
    auto back = CdmModel::from_blob(store.load("cdm", "model", "h"));
    CHECK(back.projector() == model.projector());
    CHECK(back.tau() == model.tau());
    CHECK(back.backbone().tag() == model.backbone().tag());
    CHECK(back.meta().final_seen_accuracy == model.meta().final_seen_accuracy);
    CHECK(back.meta().touched_labels == model.meta().touched_labels);
    CHECK(back.to_blob() == model.to_blob());
}
