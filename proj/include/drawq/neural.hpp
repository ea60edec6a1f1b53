#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drawq/errors.hpp"
#include "drawq/parallel.hpp"
#include "drawq/rng.hpp"

namespace drawq {

/// Full-batch training knobs. The optimizer stops when the gradient norm
/// falls below grad_tol, the iteration cap is hit, or the line search can
/// no longer make progress.
struct TrainConfig {
    double l2 = 1e-4;          // weight regularization strength (biases exempt)
    double grad_tol = 1e-6;
    int max_iterations = 500;
    double init_scale = 1.0;   // multiplies 1/sqrt(fan_in)
    int restarts = 2;
    int lbfgs_memory = 10;
};

/// Feedforward net with two rectified hidden layers and a linear scalar
/// output. Parameters flatten in the fixed order
/// [W1 row-major, b1, W2 row-major, b2, W3, b3].
class Network {
public:
    Network() = default;

    Network(int in, int h1, int h2)
        : w1_(Eigen::MatrixXd::Zero(h1, in)),
          b1_(Eigen::VectorXd::Zero(h1)),
          w2_(Eigen::MatrixXd::Zero(h2, h1)),
          b2_(Eigen::VectorXd::Zero(h2)),
          w3_(Eigen::RowVectorXd::Zero(h2)),
          b3_(0.0) {
        if (in < 1 || h1 < 1 || h2 < 1)
            throw contract_error("Network: layer sizes must be positive");
    }

    /// Uniform [-s, s] weights with s = scale/sqrt(fan_in), zero biases.
    static Network init(int in, int h1, int h2, double scale, RngStream& rng) {
        Network n(in, h1, h2);
        auto fill = [&rng](auto& m, double s) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c)
                    m(r, c) = s * (2.0 * rng.uniform() - 1.0);
        };
        fill(n.w1_, scale / std::sqrt(static_cast<double>(in)));
        fill(n.w2_, scale / std::sqrt(static_cast<double>(h1)));
        fill(n.w3_, scale / std::sqrt(static_cast<double>(h2)));
        return n;
    }

    int input_dim() const { return static_cast<int>(w1_.cols()); }
    int hidden1() const { return static_cast<int>(w1_.rows()); }
    int hidden2() const { return static_cast<int>(w2_.rows()); }

    int param_count() const {
        return static_cast<int>(w1_.size() + b1_.size() + w2_.size() + b2_.size() + w3_.size() + 1);
    }

    double forward(const Eigen::VectorXd& x) const {
        if (x.size() != w1_.cols()) throw contract_error("Network::forward: input dim mismatch");
        const Eigen::VectorXd a1 = ((w1_ * x) + b1_).cwiseMax(0.0);
        const Eigen::VectorXd a2 = ((w2_ * a1) + b2_).cwiseMax(0.0);
        return w3_.dot(a2) + b3_;
    }

    /// Batched forward pass; rows of X are examples.
    Eigen::VectorXd forward_batch(const Eigen::MatrixXd& X) const {
        if (X.cols() != w1_.cols())
            throw contract_error("Network::forward_batch: input dim mismatch");
        Eigen::MatrixXd a1 = ((X * w1_.transpose()).rowwise() + b1_.transpose()).cwiseMax(0.0);
        Eigen::MatrixXd a2 = ((a1 * w2_.transpose()).rowwise() + b2_.transpose()).cwiseMax(0.0);
        return (a2 * w3_.transpose()).array() + b3_;
    }

    double value(const Eigen::VectorXd& x) const { return forward(x); }
    Eigen::VectorXd value_batch(const Eigen::MatrixXd& X) const { return forward_batch(X); }
    double operator()(const Eigen::VectorXd& x) const { return forward(x); }

    Eigen::VectorXd params() const {
        Eigen::VectorXd p(param_count());
        Eigen::Index i = 0;
        auto put = [&p, &i](const auto& m) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) p[i++] = m(r, c);
        };
        put(w1_); put(b1_); put(w2_); put(b2_); put(w3_);
        p[i++] = b3_;
        return p;
    }

    void set_params(const Eigen::VectorXd& p) {
        if (p.size() != param_count()) throw contract_error("Network::set_params: size mismatch");
        Eigen::Index i = 0;
        auto get = [&p, &i](auto& m) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = p[i++];
        };
        get(w1_); get(b1_); get(w2_); get(b2_); get(w3_);
        b3_ = p[i++];
    }

    double weight_norm_sq() const {
        return w1_.squaredNorm() + w2_.squaredNorm() + w3_.squaredNorm();
    }

    /// Smallest pre-activation magnitude over the dataset; near-zero values
    /// sit on a rectifier kink where finite differences are unreliable.
    double min_preactivation(const Eigen::MatrixXd& X) const {
        const Eigen::MatrixXd z1 = (X * w1_.transpose()).rowwise() + b1_.transpose();
        const Eigen::MatrixXd z2 =
            (z1.cwiseMax(0.0) * w2_.transpose()).rowwise() + b2_.transpose();
        return std::min(z1.cwiseAbs().minCoeff(), z2.cwiseAbs().minCoeff());
    }

    /// Flat-text dump (sizes, then parameters in flattening order).
    void dump(std::ostream& out) const {
        out << "network " << input_dim() << ' ' << hidden1() << ' ' << hidden2() << '\n';
        const Eigen::VectorXd p = params();
        char buf[64];
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", p[i]);
            out << buf << (i + 1 == p.size() ? '\n' : ' ');
        }
    }

    static Network parse(std::istream& in) {
        std::string tag;
        int n = 0, h1 = 0, h2 = 0;
        if (!(in >> tag >> n >> h1 >> h2) || tag != "network")
            throw config_error("Network::parse: bad header");
        Network net(n, h1, h2);
        Eigen::VectorXd p(net.param_count());
        for (Eigen::Index i = 0; i < p.size(); ++i)
            if (!(in >> p[i])) throw config_error("Network::parse: truncated parameters");
        net.set_params(p);
        return net;
    }

    friend struct NetworkGradient;

private:
    Eigen::MatrixXd w1_;
    Eigen::VectorXd b1_;
    Eigen::MatrixXd w2_;
    Eigen::VectorXd b2_;
    Eigen::RowVectorXd w3_;
    double b3_ = 0.0;
};

namespace detail {
inline void check_dataset(const Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() == 0) throw contract_error("neural: empty dataset");
    if (X.rows() != y.size()) throw contract_error("neural: inputs/targets length mismatch");
    if (X.cols() != net.input_dim()) throw contract_error("neural: input dim mismatch");
}
}  // namespace detail

/// Shared loss/gradient evaluation. Loss is the sum of squared errors plus
/// l2 * sum of squared weights (biases unregularized).
struct NetworkGradient {
    static double loss(const Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       double l2) {
        detail::check_dataset(net, X, y);
        const Eigen::VectorXd out = net.forward_batch(X);
        return (out - y).squaredNorm() + l2 * net.weight_norm_sq();
    }

    static std::pair<double, Eigen::VectorXd> loss_and_gradient(const Network& net,
                                                                const Eigen::MatrixXd& X,
                                                                const Eigen::VectorXd& y,
                                                                double l2) {
        detail::check_dataset(net, X, y);
        const Eigen::MatrixXd z1 = (X * net.w1_.transpose()).rowwise() + net.b1_.transpose();
        const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
        const Eigen::MatrixXd z2 = (a1 * net.w2_.transpose()).rowwise() + net.b2_.transpose();
        const Eigen::MatrixXd a2 = z2.cwiseMax(0.0);
        const Eigen::VectorXd out = (a2 * net.w3_.transpose()).array() + net.b3_;
        const Eigen::VectorXd resid = out - y;
        const double loss_value = resid.squaredNorm() + l2 * net.weight_norm_sq();

        const Eigen::VectorXd gout = 2.0 * resid;
        const Eigen::RowVectorXd dw3 = gout.transpose() * a2 + 2.0 * l2 * net.w3_;
        const double db3 = gout.sum();
        Eigen::MatrixXd g2 = gout * net.w3_;  // N x h2
        g2 = g2.cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd dw2 = g2.transpose() * a1 + 2.0 * l2 * net.w2_;
        const Eigen::RowVectorXd db2 = g2.colwise().sum();
        Eigen::MatrixXd g1 = g2 * net.w2_;  // N x h1
        g1 = g1.cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd dw1 = g1.transpose() * X + 2.0 * l2 * net.w1_;
        const Eigen::RowVectorXd db1 = g1.colwise().sum();

        Eigen::VectorXd grad(net.param_count());
        Eigen::Index i = 0;
        auto put = [&grad, &i](const auto& m) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) grad[i++] = m(r, c);
        };
        put(dw1); put(db1.transpose()); put(dw2); put(db2.transpose()); put(dw3);
        grad[i++] = db3;
        return {loss_value, std::move(grad)};
    }
};

inline double loss(const Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double l2) {
    return NetworkGradient::loss(net, X, y, l2);
}

/// Analytic gradient of the regularized loss, flattened in parameter order.
inline Eigen::VectorXd gradient(const Network& net, const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& y, double l2) {
    return NetworkGradient::loss_and_gradient(net, X, y, l2).second;
}

struct OptimizeResult {
    double final_loss = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// L-BFGS with Armijo backtracking. Accepted iterations never increase the
/// loss; terminates on the gradient tolerance, the iteration cap, a failed
/// line search, or a twice-repeated negligible decrease.
inline OptimizeResult optimize(Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const TrainConfig& cfg, std::vector<double>* loss_trace = nullptr) {
    detail::check_dataset(net, X, y);
    const int m = std::max(1, cfg.lbfgs_memory);
    Eigen::VectorXd p = net.params();
    auto [L, g] = NetworkGradient::loss_and_gradient(net, X, y, cfg.l2);
    if (!std::isfinite(L))
        throw numerical_error("optimize: non-finite initial loss");
    if (loss_trace) loss_trace->push_back(L);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    OptimizeResult res;
    int stall = 0;
    Network work = net;

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        res.grad_norm = g.norm();
        if (res.grad_norm <= cfg.grad_tol) {
            res.converged = true;
            break;
        }
        // two-loop recursion
        Eigen::VectorXd d = -g;
        const std::size_t k = s_hist.size();
        std::vector<double> alpha(k);
        for (std::size_t j = k; j-- > 0;) {
            const double rho = 1.0 / y_hist[j].dot(s_hist[j]);
            alpha[j] = rho * s_hist[j].dot(d);
            d -= alpha[j] * y_hist[j];
        }
        if (k > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t j = 0; j < k; ++j) {
            const double rho = 1.0 / y_hist[j].dot(s_hist[j]);
            const double beta = rho * y_hist[j].dot(d);
            d += (alpha[j] - beta) * s_hist[j];
        }
        double dg = d.dot(g);
        if (!(dg < 0.0)) {  // not a descent direction; restart from steepest descent
            d = -g;
            dg = -g.squaredNorm();
            s_hist.clear();
            y_hist.clear();
        }

        double step = iter == 0 ? std::min(1.0, 1.0 / std::max(1.0, res.grad_norm)) : 1.0;
        double L2 = std::numeric_limits<double>::infinity();
        Eigen::VectorXd p_new, g_new;
        bool accepted = false;
        bool have_grad = false;
        for (int back = 0; back < 60; ++back) {
            p_new = p + step * d;
            work.set_params(p_new);
            if (back == 0) {  // the unit step usually passes; fuse its gradient
                auto eval = NetworkGradient::loss_and_gradient(work, X, y, cfg.l2);
                L2 = eval.first;
                g_new = std::move(eval.second);
                have_grad = true;
            } else {
                L2 = NetworkGradient::loss(work, X, y, cfg.l2);
                have_grad = false;
            }
            if (std::isfinite(L2) && L2 <= L + 1e-4 * step * dg) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // line search exhausted

        if (!have_grad) {
            work.set_params(p_new);
            auto eval = NetworkGradient::loss_and_gradient(work, X, y, cfg.l2);
            g_new = std::move(eval.second);
        }
        if (!std::isfinite(L2))
            throw numerical_error("optimize: non-finite loss at iteration " + std::to_string(iter));

        Eigen::VectorXd s = p_new - p;
        Eigen::VectorXd yv = g_new - g;
        if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            if (static_cast<int>(s_hist.size()) > m) {
                s_hist.pop_front();
                y_hist.pop_front();
            }
        }

        if (L - L2 <= 1e-13 * (1.0 + std::abs(L))) {
            if (++stall >= 2) {
                p = std::move(p_new);
                L = L2;
                g = std::move(g_new);
                ++res.iterations;
                if (loss_trace) loss_trace->push_back(L);
                break;
            }
        } else {
            stall = 0;
        }
        p = std::move(p_new);
        L = L2;
        g = std::move(g_new);
        ++res.iterations;
        if (loss_trace) loss_trace->push_back(L);
    }
    net.set_params(p);
    res.final_loss = L;
    res.grad_norm = g.norm();
    return res;
}

/// Trains a fresh network: `restarts` independent random initializations,
/// each optimized to convergence; the lowest final loss wins (ties go to
/// the earlier restart). Deterministic given the rng stream.
inline Network train(int in, int h1, int h2, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const TrainConfig& cfg, const RngStream& rng) {
    if (cfg.restarts < 1) throw config_error("train: restarts must be >= 1");
    Network best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        RngStream init_rng = rng.child("restart", static_cast<std::uint64_t>(r));
        Network net = Network::init(in, h1, h2, cfg.init_scale, init_rng);
        const OptimizeResult res = optimize(net, X, y, cfg);
        if (res.final_loss < best_loss) {
            best_loss = res.final_loss;
            best = std::move(net);
        }
    }
    return best;
}

/// Coefficient of determination 1 - SS_res / SS_tot.
inline double r2_score(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size() || targets.size() < 2)
        throw contract_error("r2_score: need equal-length vectors with >= 2 entries");
    const double mean = targets.mean();
    const double ss_tot = (targets.array() - mean).matrix().squaredNorm();
    if (ss_tot <= 0.0) throw numerical_error("r2_score: constant targets, variance undefined");
    const double ss_res = (predictions - targets).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

/// Mean held-out R^2 over a shuffled k-fold split. Fold assignment comes
/// from the stream's "shuffle" child; fold f trains with the "fold<f>"
/// child. Folds may be evaluated concurrently.
inline double cross_validate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int h1, int h2,
                             int folds, const TrainConfig& cfg, const RngStream& rng,
                             int threads = 1) {
    const Eigen::Index n = X.rows();
    if (folds < 2) throw contract_error("cross_validate: folds must be >= 2");
    if (n < folds) throw contract_error("cross_validate: dataset smaller than fold count");

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    RngStream shuffle_rng = rng.child("shuffle");
    for (Eigen::Index i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i + 1)))]);

    std::vector<Eigen::Index> bounds(static_cast<std::size_t>(folds) + 1, 0);
    const Eigen::Index base = n / folds, extra = n % folds;
    for (int f = 0; f < folds; ++f)
        bounds[static_cast<std::size_t>(f) + 1] =
            bounds[static_cast<std::size_t>(f)] + base + (f < extra ? 1 : 0);

    std::vector<double> scores(static_cast<std::size_t>(folds));
    parallel_for(folds, threads, [&](int f) {
        const Eigen::Index lo = bounds[static_cast<std::size_t>(f)];
        const Eigen::Index hi = bounds[static_cast<std::size_t>(f) + 1];
        const Eigen::Index n_test = hi - lo, n_train = n - n_test;
        Eigen::MatrixXd Xtr(n_train, X.cols()), Xte(n_test, X.cols());
        Eigen::VectorXd ytr(n_train), yte(n_test);
        Eigen::Index a = 0, b = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index src = perm[static_cast<std::size_t>(i)];
            if (i >= lo && i < hi) {
                Xte.row(b) = X.row(src);
                yte[b++] = y[src];
            } else {
                Xtr.row(a) = X.row(src);
                ytr[a++] = y[src];
            }
        }
        const Network net = train(static_cast<int>(X.cols()), h1, h2, Xtr, ytr, cfg,
                                  rng.child("fold", static_cast<std::uint64_t>(f)));
        scores[static_cast<std::size_t>(f)] = r2_score(net.forward_batch(Xte), yte);
    });
    double sum = 0.0;
    for (double s : scores) sum += s;
    return sum / folds;
}

}  // namespace drawq
