#include <gtest/gtest.h>

#include "ufmc_anm/estimator.hpp"
#include "ufmc_anm/harness.hpp"

using namespace ufmc;

namespace
{

Eigen::MatrixXcd atom_matrix(const std::vector<std::pair<double, double>>& weighted, int size)
{
    Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(size, size);
    for (const auto& [w, tau] : weighted)
    {
        const Eigen::VectorXcd e = build_steering_vector(tau, size).values;
        T += w * e * e.adjoint();
    }
    return T;
}

struct Frame
{
    ReceivedFrame frame;
    Eigen::VectorXcd window;
};

Frame noiseless_frame(const Scenario& sc, const std::vector<double>& dts, const std::vector<cplx>& hs)
{
    const SystemConfig& c = sc.config;
    const SymbolStream stream = repeated_stream(sc.pilot, 3);
    ChannelRealization ch{Eigen::VectorXcd(static_cast<Eigen::Index>(hs.size())),
                          Eigen::VectorXd(static_cast<Eigen::Index>(dts.size()))};
    std::vector<Eigen::VectorXcd> w;
    for (std::size_t i = 0; i < dts.size(); ++i)
    {
        ch.h[static_cast<Eigen::Index>(i)] = hs[i];
        ch.delta_t[static_cast<Eigen::Index>(i)] = dts[i];
        w.push_back(sample_delayed_window(stream, sc.filters, c.symbol_length(), dts[i], c));
    }
    Rng rng = derive_stream(0, 0);
    Frame f;
    f.window = apply_channel_and_noise(w, ch, 0.0, rng);
    f.frame = receiver_front_end(f.window, c);
    return f;
}

EstimatorOptions noiseless_options()
{
    EstimatorOptions o;
    o.lambda = LambdaRule{}.fixed_value;
    o.solver.tolerance = 1e-5;
    return o;
}

} // namespace

TEST(MatrixPencil, SingleAtom)
{
    const auto taus = matrix_pencil(atom_matrix({{1.0, 0.1}}, 128), 1);
    ASSERT_EQ(taus.size(), 1u);
    EXPECT_NEAR(taus[0], 0.1, 1e-10);
}

TEST(MatrixPencil, TwoAtoms)
{
    const auto taus = matrix_pencil(atom_matrix({{2.0, -0.03}, {0.5, 0.07}}, 128), 2);
    EXPECT_NEAR(taus[0], -0.03, 1e-8);
    EXPECT_NEAR(taus[1], 0.07, 1e-8);
}

TEST(MatrixPencil, DcAtom)
{
    const auto taus = matrix_pencil(atom_matrix({{3.0, 0.0}}, 16), 1);
    EXPECT_EQ(taus[0], 0.0);
}

TEST(MatrixPencil, RandomSeparatedAtoms)
{
    Rng rng = derive_stream(51, 0);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 100; ++trial)
    {
        double t1 = u(rng), t2 = u(rng);
        while (std::abs(detail::wrap_unit_interval(t1 - t2)) < 1.0 / 128.0)
            t2 = u(rng);
        const double w1 = std::norm(complex_gaussian(rng, 1.0)) + 0.05;
        const double w2 = std::norm(complex_gaussian(rng, 1.0)) + 0.05;
        auto taus = matrix_pencil(HermitianToeplitz(atom_matrix({{w1, t1}, {w2, t2}}, 128).col(0)), 2);
        std::vector<double> truth{t1, t2};
        std::sort(truth.begin(), truth.end());
        for (int i = 0; i < 2; ++i)
            EXPECT_NEAR(taus[i], truth[i], 1e-8);
    }
}

TEST(MatrixPencil, RankDeficiency)
{
    try
    {
        matrix_pencil(atom_matrix({{1.0, 0.2}}, 32), 2);
        FAIL() << "expected RankDeficient";
    }
    catch (const RankDeficient& e)
    {
        EXPECT_EQ(e.detected_rank(), 1);
    }
    EXPECT_THROW(matrix_pencil(Eigen::MatrixXcd::Zero(8, 8), 1), RankDeficient);
}

TEST(TauToDeltaT, Conversions)
{
    const SystemConfig c;
    EXPECT_EQ(tau_to_delta_t(0.0, c), 0.0);
    EXPECT_NEAR(tau_to_delta_t(-3.5 / 128.0, c), 3.5, 1e-12);
    Rng rng = derive_stream(52, 0);
    std::uniform_real_distribution<double> u(-c.L, c.L);
    for (int i = 0; i < 1000; ++i)
    {
        const double dt = u(rng);
        EXPECT_NEAR(tau_to_delta_t(-dt / c.fft_size(), c), dt, 1e-12);
    }
    // wrap into (-N, N]
    EXPECT_NEAR(tau_to_delta_t(-0.5, c), 64.0, 1e-12);
}

TEST(LsChannels, ExactFits)
{
    const int n = 128;
    const cplx h = std::polar(3.0, pi / 4.0);
    const std::vector<double> one{0.05};
    const ChannelFit f1 = ls_channels(one, h * build_steering_vector(0.05, n).values);
    EXPECT_LT(std::abs(f1.h[0] - h), 1e-10);

    const std::vector<double> two{-0.11, 0.23};
    const cplx h1(0.4, -1.2), h2(-0.7, 0.1);
    const Eigen::VectorXcd g = h1 * build_steering_vector(two[0], n).values + h2 * build_steering_vector(two[1], n).values;
    const ChannelFit f2 = ls_channels(two, g);
    EXPECT_LT(std::abs(f2.h[0] - h1), 1e-8);
    EXPECT_LT(std::abs(f2.h[1] - h2), 1e-8);
    EXPECT_LT(f2.residual, 1e-9);
}

TEST(LsChannels, OrthogonalPerturbationIgnored)
{
    const int n = 64;
    const std::vector<double> taus{0.1, -0.2};
    Eigen::MatrixXcd E(n, 2);
    E.col(0) = build_steering_vector(taus[0], n).values;
    E.col(1) = build_steering_vector(taus[1], n).values;
    Rng rng = derive_stream(53, 0);
    Eigen::VectorXcd v(n);
    for (auto& x : v)
        x = complex_gaussian(rng, 1.0);
    v -= E * (E.adjoint() * E).ldlt().solve(E.adjoint() * v); // v orthogonal to range(E)
    const Eigen::VectorXcd h = (Eigen::VectorXcd(2) << cplx(1.0, 1.0), cplx(-2.0, 0.5)).finished();
    const ChannelFit a = ls_channels(taus, E * h);
    const ChannelFit b = ls_channels(taus, E * h + 0.3 * v);
    for (int i = 0; i < 2; ++i)
        EXPECT_LT(std::abs(a.h[i] - b.h[i]), 1e-10);

    // LS optimality against random alternatives
    for (int trial = 0; trial < 20; ++trial)
    {
        Eigen::VectorXcd alt(2);
        alt << complex_gaussian(rng, 1.0), complex_gaussian(rng, 1.0);
        const Eigen::VectorXcd g = E * h + 0.3 * v;
        EXPECT_LE(b.residual, (g - E * alt).norm() + 1e-12);
    }
}

TEST(LsChannels, IllConditioned)
{
    const std::vector<double> close{0.1, 0.1 + 1e-9};
    try
    {
        ls_channels(close, Eigen::VectorXcd::Ones(128));
        FAIL() << "expected IllConditioned";
    }
    catch (const IllConditioned& e)
    {
        EXPECT_GT(e.condition_number(), 1e10);
    }
}

TEST(Associate, Examples)
{
    const std::vector<double> truth{1.0, -2.0};
    EXPECT_EQ(associate(truth, truth), (std::vector<int>{0, 1}));
    const std::vector<double> reversed{-2.0, 1.0};
    EXPECT_EQ(associate(reversed, truth), (std::vector<int>{1, 0}));
    const std::vector<double> est{-1.9, 1.1};
    const auto p = associate(est, truth);
    EXPECT_EQ(p, (std::vector<int>{1, 0}));
    double se = 0.0;
    for (int i = 0; i < 2; ++i)
        se += std::pow(est[static_cast<std::size_t>(p[i])] - truth[static_cast<std::size_t>(i)], 2);
    EXPECT_NEAR(se, 0.02, 1e-12);
}

TEST(Associate, MatchesExhaustiveSearch)
{
    Rng rng = derive_stream(54, 0);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int b = 1; b <= 5; ++b)
        for (int trial = 0; trial < 50; ++trial)
        {
            std::vector<double> est(static_cast<std::size_t>(b)), truth(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i)
            {
                est[static_cast<std::size_t>(i)] = u(rng);
                truth[static_cast<std::size_t>(i)] = u(rng);
            }
            auto cost = [&](const std::vector<int>& p) {
                double s = 0.0;
                for (int i = 0; i < b; ++i)
                    s += std::pow(est[static_cast<std::size_t>(p[static_cast<std::size_t>(i)])] -
                                      truth[static_cast<std::size_t>(i)], 2);
                return s;
            };
            std::vector<int> perm(static_cast<std::size_t>(b));
            std::iota(perm.begin(), perm.end(), 0);
            double best = std::numeric_limits<double>::infinity();
            do
                best = std::min(best, cost(perm));
            while (std::next_permutation(perm.begin(), perm.end()));
            EXPECT_NEAR(cost(associate(est, truth)), best, 1e-12);
        }
}

TEST(TimingAdvance, StrictThreshold)
{
    EXPECT_EQ(timing_advance_decision(std::vector<double>{0.1, 5.0}, 1.0), (std::vector<bool>{false, true}));
    EXPECT_EQ(timing_advance_decision(std::vector<double>{0.2, -0.9}, 1.0), (std::vector<bool>{false, false}));
    EXPECT_EQ(timing_advance_decision(std::vector<double>{1.0, -1.0, -1.5}, 1.0),
              (std::vector<bool>{false, false, true}));
    EXPECT_THROW(timing_advance_decision(std::vector<double>{1.0}, 0.0), InvalidParameter);
}

TEST(CorrelationBaseline, SingleUser)
{
    const Scenario sc{SystemConfig{}};
    for (double dt : {0.0, 3.0, -2.0})
    {
        const Frame f = noiseless_frame(sc, {dt}, {cplx(1.0, 0.0)});
        const double est = correlation_baseline(f.window, sc.pilot_waveform, -6, 6);
        if (dt == 0.0)
            EXPECT_NEAR(est, 0.0, 0.5);
        else
            EXPECT_EQ(std::lround(std::trunc(est)), std::lround(dt)) << est;
    }
    EXPECT_THROW(correlation_baseline(sc.pilot_waveform, sc.pilot_waveform, 2, 1), InvalidParameter);
}

TEST(CorrelationBaseline, SinglePeakForTwoUsers)
{
    const Scenario sc{SystemConfig{}};
    const Frame f = noiseless_frame(sc, {-4.0, 3.0}, {cplx(1.0, 0.0), cplx(0.9, 0.2)});
    const double est = correlation_baseline(f.window, sc.pilot_waveform, -6, 6);
    // one lag for both users: at least one of them is off by more than 3 samples
    EXPECT_GT(std::max(std::abs(est + 4.0), std::abs(est - 3.0)), 3.0);
}

TEST(JointEstimate, NoiselessSingleUser)
{
    SystemConfig c;
    c.B = 1;
    const Scenario sc(c);
    const Frame f = noiseless_frame(sc, {2.0}, {cplx(1.0, 0.0)});
    const EstimationResult r = joint_estimate(f.frame, sc.pilot_spectrum, c, noiseless_options());
    EXPECT_LE(std::abs(r.delta_t_hats[0] - 2.0), 0.05);
    EXPECT_LE(std::abs(r.h_hats[0] - cplx(1.0, 0.0)), 0.05);
    EXPECT_TRUE(std::isfinite(r.residual_norm));
    EXPECT_NEAR(r.delta_t_hats[0], tau_to_delta_t(r.taus[0], c), 1e-12);
}

TEST(JointEstimate, NoiselessTwoUsers)
{
    const Scenario sc{SystemConfig{}};
    const std::vector<double> truth{-3.2, 1.7};
    const Frame f = noiseless_frame(sc, truth, {cplx(0.9, -0.3), cplx(-0.4, 0.8)});
    const EstimationResult r = joint_estimate(f.frame, sc.pilot_spectrum, sc.config, noiseless_options());
    const auto p = associate(r.delta_t_hats, truth);
    for (int i = 0; i < 2; ++i)
        EXPECT_LE(std::abs(r.delta_t_hats[static_cast<std::size_t>(p[i])] - truth[static_cast<std::size_t>(i)]), 0.1)
            << "user " << i;
}

TEST(JointEstimate, IntegerOffsetEquivariance)
{
    const Scenario sc{SystemConfig{}};
    const std::vector<double> base{-2.0, 1.0};
    const std::vector<cplx> hs{cplx(1.0, 0.2), cplx(-0.5, 0.7)};
    const EstimatorOptions o = noiseless_options();
    const Frame f0 = noiseless_frame(sc, base, hs);
    const EstimationResult r0 = joint_estimate(f0.frame, sc.pilot_spectrum, sc.config, o);
    const auto p0 = associate(r0.delta_t_hats, base);
    double err0 = 0.0;
    for (int i = 0; i < 2; ++i)
        err0 = std::max(err0, std::abs(r0.delta_t_hats[static_cast<std::size_t>(p0[i])] - base[static_cast<std::size_t>(i)]));

    const std::vector<double> shifted{base[0] + 2.0, base[1] + 2.0};
    const Frame f1 = noiseless_frame(sc, shifted, hs);
    const EstimationResult r1 = joint_estimate(f1.frame, sc.pilot_spectrum, sc.config, o);
    const auto p1 = associate(r1.delta_t_hats, shifted);
    for (int i = 0; i < 2; ++i)
    {
        const double d0 = r0.delta_t_hats[static_cast<std::size_t>(p0[i])];
        const double d1 = r1.delta_t_hats[static_cast<std::size_t>(p1[i])];
        EXPECT_LE(std::abs((d1 - d0) - 2.0), std::max(2.0 * err0, 0.05)) << "user " << i;
    }
}

TEST(JointEstimate, UserOrderInvariance)
{
    const Scenario sc{SystemConfig{}};
    const EstimatorOptions o = noiseless_options();
    const Frame a = noiseless_frame(sc, {-1.0, 3.0}, {cplx(1.0, 0.0), cplx(0.0, 0.8)});
    const Frame b = noiseless_frame(sc, {3.0, -1.0}, {cplx(0.0, 0.8), cplx(1.0, 0.0)});
    auto ra = joint_estimate(a.frame, sc.pilot_spectrum, sc.config, o).delta_t_hats;
    auto rb = joint_estimate(b.frame, sc.pilot_spectrum, sc.config, o).delta_t_hats;
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    for (int i = 0; i < 2; ++i)
        EXPECT_NEAR(ra[static_cast<std::size_t>(i)], rb[static_cast<std::size_t>(i)], 1e-9);
}

TEST(JointEstimate, PureNoiseDoesNotCrash)
{
    const Scenario sc{SystemConfig{}};
    Rng rng = derive_stream(55, 0);
    Eigen::VectorXcd y(sc.config.symbol_length());
    for (auto& v : y)
        v = complex_gaussian(rng, 1.0);
    EstimatorOptions o;
    o.lambda = select_lambda(sc.config.lambda_rule, 1.0, sc.config.N);
    o.solver.max_iter = 400;
    o.prior_bound = sc.config.L;
    try
    {
        const EstimationResult r = joint_estimate(receiver_front_end(y, sc.config, 1.0), sc.pilot_spectrum, sc.config, o);
        EXPECT_EQ(r.delta_t_hats.size(), 2u);
        EXPECT_EQ(r.outside_prior.size(), 2u);
    }
    catch (const EstimationError& e)
    {
        EXPECT_FALSE(e.stage().empty());
    }
}

TEST(JointEstimate, ZeroSignalIsFlagged)
{
    const Scenario sc{SystemConfig{}};
    const ReceivedFrame f = receiver_front_end(Eigen::VectorXcd::Zero(sc.config.symbol_length()), sc.config);
    const EstimationResult r = joint_estimate(f, sc.pilot_spectrum, sc.config, noiseless_options());
    EXPECT_TRUE(r.no_signal);
    EXPECT_EQ(r.delta_t_hats.size(), 2u);
}
