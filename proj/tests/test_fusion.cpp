#include <doctest.h>

#include <cmath>

#include "onlinebev/error.hpp"
#include "onlinebev/fusion.hpp"
#include "onlinebev/gradcheck.hpp"
#include "support.hpp"

using namespace obev;

namespace {

void randomize(ParamStore& p, Rng& rng, double scale = 0.5)
{
    for (auto& [name, e] : p) {
        for (double& v : e.value.values()) v = uniform(rng, -scale, scale);
    }
}

FusionConfig small_fusion(int layers = 1)
{
    FusionConfig cfg;
    cfg.channels = 4;
    cfg.layers = layers;
    cfg.heads = 2;
    cfg.points = 2;
    cfg.cwa_reduction = 2;
    return cfg;
}

Tensor identity(std::int64_t n)
{
    Tensor t(Shape{n, n});
    for (std::int64_t i = 0; i < n; ++i) t[static_cast<std::size_t>(i * n + i)] = 1.0;
    return t;
}

// Composition of the oracle primitives for one MBFNet pass in infer mode.
std::pair<Tensor, Tensor> mbfnet_oracle(const ParamStore& p, const FusionConfig& cfg, Tensor tgt, Tensor hist)
{
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string pre = layer_prefix("mbf", l);
        Tensor m = tgt;
        if (cfg.mfe != MfeMode::none) m = oracle::linear_p(p, pre + ".mfe.fc", oracle::sub(tgt, hist));
        if (cfg.mfe == MfeMode::diff_cwa) {
            m = oracle::squeeze_excite(m, p.value(pre + ".mfe.cwa.fc1.W"), p.value(pre + ".mfe.cwa.fc1.b"),
                                       p.value(pre + ".mfe.cwa.fc2.W"), p.value(pre + ".mfe.cwa.fc2.b"));
        }
        const Tensor z = oracle::mgwa(p, pre + ".attn", m, hist, cfg.heads, cfg.points);
        const Tensor q_hat = oracle::layer_norm_p(p, pre + ".hist.ln", oracle::add(z, hist));
        const Tensor ffn = oracle::linear_p(p, pre + ".ffn1.fc2", oracle::relu(oracle::linear_p(p, pre + ".ffn1.fc1", q_hat)));
        hist = oracle::layer_norm_p(p, pre + ".ffn1.ln", oracle::add(q_hat, ffn));
        tgt = oracle::relu(oracle::linear_p(p, pre + ".ffn2", oracle::concat(tgt, q_hat)));
    }
    return {tgt, hist};
}

}  // namespace

TEST_SUITE("fusion")
{

TEST_CASE("cwa examples")
{
    Rng rng(1);
    ParamStore p;
    add_zero_linear_params(p, "cwa.fc1", 4, 2);
    add_zero_linear_params(p, "cwa.fc2", 2, 4);
    const Tensor x = oracle::random({2, 3, 4}, rng);
    Tape tape;
    const Context ctx{tape, p};
    Var y = cwa(ctx, "cwa", tape.constant(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == 0.5 * x[i]);

    randomize(p, rng, 1.0);
    Tape t2;
    const Context ctx2{t2, p};
    Var y0 = cwa(ctx2, "cwa", t2.constant(Tensor(Shape{2, 3, 4})));
    CHECK(max_abs(y0.value()) == 0.0);

    const Tensor x2 = oracle::random({2, 2, 4}, rng);
    Var y2 = cwa(ctx2, "cwa", t2.constant(x2));
    const Tensor ref = oracle::squeeze_excite(x2, p.value("cwa.fc1.W"), p.value("cwa.fc1.b"), p.value("cwa.fc2.W"),
                                              p.value("cwa.fc2.b"));
    CHECK(oracle::max_abs_diff(y2.value(), ref) <= 1e-12);
}

TEST_CASE("mfe examples")
{
    Rng rng(2);
    const FusionConfig cfg = small_fusion();
    ParamStore p;
    init_mbfnet_params(p, cfg, rng);
    p.value("mbf.l0.mfe.fc.b").fill(0.0);
    Tape tape;
    const Context ctx{tape, p};
    const Tensor q = oracle::random({3, 3, 4}, rng);
    const MotionFeature same = mfe_forward(ctx, cfg, "mbf.l0.mfe", {tape.constant(q), tape.constant(q), 0});
    CHECK(max_abs(same.m.value()) == 0.0);

    randomize(p, rng);
    const Tensor h = oracle::random({3, 3, 4}, rng);
    Tape t2;
    const MotionFeature m = mfe_forward(Context{t2, p}, cfg, "mbf.l0.mfe", {t2.constant(q), t2.constant(h), 0});
    const Tensor lin = oracle::linear_p(p, "mbf.l0.mfe.fc", oracle::sub(q, h));
    const Tensor ref = oracle::squeeze_excite(lin, p.value("mbf.l0.mfe.cwa.fc1.W"), p.value("mbf.l0.mfe.cwa.fc1.b"),
                                              p.value("mbf.l0.mfe.cwa.fc2.W"), p.value("mbf.l0.mfe.cwa.fc2.b"));
    CHECK(oracle::max_abs_diff(m.m.value(), ref) <= 1e-12);

    FusionConfig none = cfg;
    none.mfe = MfeMode::none;
    const MotionFeature t = mfe_forward(ctx, none, "unused", {tape.constant(q), tape.constant(h), 0});
    CHECK(t.m.value() == q);
    CHECK_THROWS_AS(mfe_forward(ctx, cfg, "mbf.l0.mfe", {tape.constant(q), tape.constant(Tensor(Shape{2, 3, 4})), 0}),
                    DimensionError);
}

TEST_CASE("predict_deform examples")
{
    Rng rng(3);
    const FusionConfig cfg = small_fusion();
    ParamStore p;
    init_mbfnet_params(p, cfg, rng);
    p.value("mbf.l0.attn.weight.W").fill(0.0);
    p.value("mbf.l0.attn.weight.b").fill(0.0);
    Tape tape;
    const Context ctx{tape, p};
    const DeformParams d = predict_deform(ctx, cfg, "mbf.l0.attn", {tape.constant(oracle::random({3, 3, 4}, rng))});
    CHECK(d.offsets.shape() == Shape{3, 3, 2, 2, 2});
    CHECK(max_abs(d.offsets.value()) == 0.0);
    for (double w : d.weights.value().values()) CHECK(w == 0.5);

    randomize(p, rng, 2.0);
    Tape t2;
    const DeformParams r = predict_deform(Context{t2, p}, cfg, "mbf.l0.attn", {t2.constant(oracle::random({3, 3, 4}, rng))});
    for (std::size_t i = 0; i < 18; ++i) {
        const double a = r.weights.value()[2 * i];
        const double b = r.weights.value()[2 * i + 1];
        CHECK(a >= 0);
        CHECK(b >= 0);
        CHECK(std::abs(a + b - 1.0) <= 1e-12);
    }
}

TEST_CASE("deform_gather examples")
{
    Rng rng(4);
    const Tensor value = oracle::random({4, 4, 4}, rng);
    Tape tape;
    const Tensor w = oracle::softmax_last(oracle::random({4, 4, 2, 3}, rng));
    Var out = ops::deform_gather(tape.constant(value), tape.constant(Tensor(Shape{4, 4, 2, 3, 2})), tape.constant(w));
    CHECK(max_abs_diff(out.value(), value) <= 1e-15);

    Tensor off(Shape{4, 4, 2, 3, 2});
    Tensor onehot(Shape{4, 4, 2, 3});
    for (std::size_t cell = 0; cell < 16; ++cell) {
        for (std::size_t h = 0; h < 2; ++h) {
            off[((cell * 2 + h) * 3 + 1) * 2 + 1] = 1.0;
            onehot[(cell * 2 + h) * 3 + 1] = 1.0;
        }
    }
    Var shifted = ops::deform_gather(tape.constant(value), tape.constant(off), tape.constant(onehot));
    for (std::int64_t r = 0; r < 4; ++r) {
        for (std::int64_t c = 0; c < 3; ++c) {
            for (std::int64_t k = 0; k < 4; ++k) CHECK(shifted.value().at(r, c, k) == value.at(r, c + 1, k));
        }
        for (std::int64_t k = 0; k < 4; ++k) CHECK(shifted.value().at(r, 3, k) == 0.0);
    }
}

TEST_CASE("deform_attn with identity projections is a bilinear gather")
{
    Rng rng(5);
    FusionConfig cfg = small_fusion();
    ParamStore p;
    init_mbfnet_params(p, cfg, rng);
    randomize(p, rng, 1.5);
    p.value("mbf.l0.attn.value.W") = identity(4);
    p.value("mbf.l0.attn.value.b").fill(0.0);
    p.value("mbf.l0.attn.out.W") = identity(4);
    p.value("mbf.l0.attn.out.b").fill(0.0);
    const Tensor m = oracle::random({5, 6, 4}, rng);
    const Tensor value = oracle::random({5, 6, 4}, rng);
    Tape tape;
    const Context ctx{tape, p};
    Var z = deform_attn(ctx, cfg, "mbf.l0.attn", {tape.constant(m)}, tape.constant(value));
    const Tensor offsets = oracle::linear_p(p, "mbf.l0.attn.offset", m).reshaped(Shape{5, 6, 2, 2, 2});
    const Tensor weights = oracle::softmax_last(oracle::linear_p(p, "mbf.l0.attn.weight", m).reshaped(Shape{5, 6, 2, 2}));
    CHECK(oracle::max_abs_diff(z.value(), oracle::deform_gather(value, offsets, weights, 2, 2)) <= 1e-12);
}

TEST_CASE("deform_attn matches brute force on random grids")
{
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        FusionConfig cfg = small_fusion();
        cfg.channels = 4;
        cfg.heads = 1 + trial % 2;
        cfg.points = 1 + trial % 3;
        ParamStore p;
        init_mbfnet_params(p, cfg, rng);
        randomize(p, rng, 1.0);
        const std::int64_t h = 2 + trial % 4;
        const std::int64_t w = 6 - trial % 3;
        const Tensor m = oracle::random({h, w, 4}, rng);
        const Tensor value = oracle::random({h, w, 4}, rng);
        Tape tape;
        const Context ctx{tape, p};
        Var z = deform_attn(ctx, cfg, "mbf.l0.attn", {tape.constant(m)}, tape.constant(value));
        CHECK(oracle::max_abs_diff(z.value(), oracle::mgwa(p, "mbf.l0.attn", m, value, cfg.heads, cfg.points)) <= 1e-12);
    }
}

TEST_CASE("update_historical examples")
{
    Rng rng(7);
    FusionConfig cfg = small_fusion();
    ParamStore p;
    init_mbfnet_params(p, cfg, rng);
    const Tensor hist = oracle::random({3, 3, 4}, rng);
    Tape tape;
    const Context ctx{tape, p};
    const HistoricalUpdate u = update_historical(ctx, cfg, "mbf.l0", tape.constant(hist), tape.constant(Tensor(Shape{3, 3, 4})));
    CHECK(oracle::max_abs_diff(u.q_hat.value(), oracle::layer_norm(hist, Tensor(Shape{4}, 1.0), Tensor(Shape{4}))) <= 1e-12);

    randomize(p, rng);
    const Tensor z = oracle::random({3, 3, 4}, rng);
    Rng r1(1);
    Rng r2(2);
    Tape ta;
    Tape tb;
    const Context infer1{ta, p, Mode::infer, &r1};
    const Context infer2{tb, p, Mode::infer, &r2};
    const HistoricalUpdate a = update_historical(infer1, cfg, "mbf.l0", ta.constant(hist), ta.constant(z));
    const HistoricalUpdate b = update_historical(infer2, cfg, "mbf.l0", tb.constant(hist), tb.constant(z));
    CHECK(a.q_hat.value() == b.q_hat.value());
    CHECK(a.q_hist_next.value() == b.q_hist_next.value());

    const Tensor q_hat = oracle::layer_norm_p(p, "mbf.l0.hist.ln", oracle::add(z, hist));
    const Tensor ffn = oracle::linear_p(p, "mbf.l0.ffn1.fc2", oracle::relu(oracle::linear_p(p, "mbf.l0.ffn1.fc1", q_hat)));
    CHECK(oracle::max_abs_diff(a.q_hat.value(), q_hat) <= 1e-12);
    CHECK(oracle::max_abs_diff(a.q_hist_next.value(), oracle::layer_norm_p(p, "mbf.l0.ffn1.ln", oracle::add(q_hat, ffn))) <= 1e-12);

    Rng r3(3);
    const Context train{ta, p, Mode::train, &r3};
    FusionConfig heavy = cfg;
    heavy.dropout = 0.5;
    const HistoricalUpdate t = update_historical(train, heavy, "mbf.l0", ta.constant(hist), ta.constant(z));
    CHECK(max_abs_diff(t.q_hat.value(), a.q_hat.value()) > 0.0);
}

TEST_CASE("fuse_target examples")
{
    Rng rng(8);
    ParamStore p;
    add_zero_linear_params(p, "fuse", 8, 4);
    p.value("fuse.b") = Tensor(Shape{4}, std::vector<double>{0.0, 0.5, 1.0, 2.0});
    Tape tape;
    const Context ctx{tape, p};
    const Tensor a = oracle::random({2, 2, 4}, rng, 0, 1);
    const Tensor b = oracle::random({2, 2, 4}, rng);
    Var out = fuse_target(ctx, "fuse", tape.constant(a), tape.constant(b));
    for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == p.value("fuse.b")[i % 4]);

    ParamStore pass;
    add_passthrough_params(pass, "fuse", 4, 2);
    Tape t2;
    CHECK(fuse_target(Context{t2, pass}, "fuse", t2.constant(a), t2.constant(b)).value() == a);

    randomize(p, rng);
    Tape t3;
    const Context ctx3{t3, p};
    Var r = fuse_target(ctx3, "fuse", t3.constant(a), t3.constant(b));
    CHECK(oracle::max_abs_diff(r.value(), oracle::relu(oracle::linear_p(p, "fuse", oracle::concat(a, b)))) <= 1e-12);
    CHECK_THROWS_AS(fuse_target(ctx3, "fuse", t3.constant(a), t3.constant(Tensor(Shape{2, 1, 4}))), DimensionError);
}

TEST_CASE("mbfnet_forward examples")
{
    Rng rng(9);
    const Tensor f = oracle::random({3, 3, 4}, rng);
    const Tensor h = oracle::random({3, 3, 4}, rng);
    ParamStore empty;
    Tape tape;
    const MbfnetOutput same = mbfnet_forward(Context{tape, empty}, small_fusion(0), tape.constant(f), tape.constant(h));
    CHECK(same.fused.value() == f);
    CHECK(same.aligned.value() == h);

    FusionConfig cfg = small_fusion(2);
    ParamStore p;
    init_mbfnet_params(p, cfg, rng);
    const MbfnetOutput start = mbfnet_forward(Context{tape, p}, cfg, tape.constant(f), tape.constant(Tensor(Shape{3, 3, 4})));
    CHECK(start.fused.value().all_finite());
    CHECK(start.aligned.value().all_finite());

    randomize(p, rng);
    Tape ta;
    Tape tb;
    const MbfnetOutput a = mbfnet_forward(Context{ta, p}, cfg, ta.constant(f), ta.constant(h));
    const MbfnetOutput b = mbfnet_forward(Context{tb, p}, cfg, tb.constant(f), tb.constant(h));
    CHECK(a.fused.value() == b.fused.value());
    CHECK(a.aligned.value() == b.aligned.value());
    const auto [rf, rh] = mbfnet_oracle(p, cfg, f, h);
    CHECK(oracle::max_abs_diff(a.fused.value(), rf) <= 1e-12);
    CHECK(oracle::max_abs_diff(a.aligned.value(), rh) <= 1e-12);

    for (MfeMode mode : {MfeMode::none, MfeMode::diff}) {
        FusionConfig c2 = cfg;
        c2.mfe = mode;
        ParamStore p2;
        init_mbfnet_params(p2, c2, rng);
        randomize(p2, rng);
        Tape to;
        const MbfnetOutput o = mbfnet_forward(Context{to, p2}, c2, to.constant(f), to.constant(h));
        CHECK(oracle::max_abs_diff(o.fused.value(), mbfnet_oracle(p2, c2, f, h).first) <= 1e-12);
        CHECK_FALSE(p2.contains("mbf.l0.mfe.cwa.fc1.W"));
    }
}

TEST_CASE("mbfnet passes grad_check")
{
    Rng rng(10);
    FusionConfig cfg = small_fusion(2);
    ParamStore theta;
    init_mbfnet_params(theta, cfg, rng);
    randomize(theta, rng);
    theta.add("in.f", oracle::random({2, 2, 4}, rng));
    theta.add("in.h", oracle::random({2, 2, 4}, rng));
    const ScalarFn fn = [&cfg](Tape& t, const ParamStore& s) {
        const MbfnetOutput o = mbfnet_forward(Context{t, s}, cfg, t.param(s, "in.f"), t.param(s, "in.h"));
        return ops::add(ops::sum(ops::square(o.fused)), ops::sum(ops::square(o.aligned)));
    };
    const GradCheckReport rep = grad_check(fn, theta);
    CAPTURE(rep.worst_param);
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("memory bank protocol")
{
    Rng rng(11);
    const GridSpec g = GridSpec::centered(4, 5, 0.5);
    MemoryBank bank;
    const EgoPose pose{1, 2, 0.3};
    CHECK(max_abs(memory_read(bank, 0, pose, g, 3)) == 0.0);
    CHECK(memory_read(bank, 0, pose, g, 3).shape() == Shape{4, 5, 3});

    const Tensor h = oracle::random({4, 5, 3}, rng);
    Tape tape;
    Var fused = tape.leaf(h);
    memory_write(bank, fused, pose, 7);
    CHECK(memory_read(bank, 7, pose, g, 3) == h);
    CHECK(max_abs(memory_read(bank, 8, pose, g, 3)) == 0.0);

    const EgoPose moved = pose_compose(pose, EgoPose{0.5, 0, 0});
    const Tensor warped = memory_read(bank, 7, moved, g, 3);
    for (std::int64_t r = 0; r < 3; ++r) {
        for (std::int64_t c = 0; c < 5; ++c) CHECK(std::abs(warped.at(r, c, 0) - h.at(r + 1, c, 0)) <= 1e-12);
    }
    bank.reset();
    CHECK(bank.empty());
}

TEST_CASE("parallel fusion baseline")
{
    Rng rng(12);
    const Tensor a = oracle::random({3, 3, 4}, rng, 0, 1);
    const Tensor b = oracle::random({3, 3, 4}, rng);
    const Tensor c = oracle::random({3, 3, 4}, rng);

    ParamStore one;
    init_parallel_params(one, 4, 1, rng, "pf");
    Tape t1;
    CHECK(parallel_fusion_baseline(Context{t1, one}, "pf", {t1.constant(a)}, 5).value() == a);
    Tape tape;

    ParamStore avg;
    Tensor w(Shape{12, 4});
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < 4; ++i) w[(k * 4 + i) * 4 + i] = 1.0 / 3;
    }
    avg.add("pf.W", w);
    avg.add("pf.b", Tensor(Shape{4}));
    const Var same = parallel_fusion_baseline(Context{tape, avg}, "pf", {tape.constant(a), tape.constant(a), tape.constant(a)}, 5);
    CHECK(max_abs_diff(same.value(), a) <= 1e-15);

    ParamStore p;
    init_parallel_params(p, 4, 3, rng, "pf");
    randomize(p, rng);
    Tape t3;
    const Var r = parallel_fusion_baseline(Context{t3, p}, "pf", {t3.constant(a), t3.constant(b), t3.constant(c)}, 5);
    CHECK(oracle::max_abs_diff(r.value(), oracle::relu(oracle::linear_p(p, "pf", oracle::concat(oracle::concat(a, b), c)))) <= 1e-12);

    CHECK_THROWS_AS(parallel_fusion_baseline(Context{tape, p}, "pf", {tape.constant(a), tape.constant(b), tape.constant(c)}, 2),
                    ConfigError);
}

TEST_CASE("fusion config validation")
{
    FusionConfig cfg = small_fusion();
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_fusion();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(mfe_mode_from_string(to_string(MfeMode::diff)) == MfeMode::diff);
    CHECK_THROWS_AS(mfe_mode_from_string("cwa"), ConfigError);
}

}  // TEST_SUITE
