#pragma once

#include "trax/common.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace trax {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kMaskOff = -1e30;  // additive attention mask for disabled pairs

// Reverse-mode tape over dense matrices. Values are computed eagerly; each op
// records a closure that scatters the output gradient to its inputs. One tape
// instance serves one forward/backward pass.
template <class T>
class Tape {
public:
    using M = Mat<T>;

    Tape() = default;
    Tape(const Tape&) = delete;             // op closures capture `this`
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    int input(M v, bool needs_grad) {
        nodes_.push_back({std::move(v), M(), needs_grad, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const M& val(int id) const { return nodes_[id].val; }

    M& grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = M::Zero(n.val.rows(), n.val.cols());
        return n.grad;
    }

    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    // C = A * B
    int matmul(int a, int b) {
        M v = nodes_[a].val * nodes_[b].val;
        return record(std::move(v), {a, b}, [this, a, b](int out) {
            const M& g = nodes_[out].grad;
            if (needs_grad(a)) grad(a).noalias() += g * nodes_[b].val.transpose();
            if (needs_grad(b)) grad(b).noalias() += nodes_[a].val.transpose() * g;
        });
    }

    // C = A * B^T
    int matmul_nt(int a, int b) {
        M v = nodes_[a].val * nodes_[b].val.transpose();
        return record(std::move(v), {a, b}, [this, a, b](int out) {
            const M& g = nodes_[out].grad;
            if (needs_grad(a)) grad(a).noalias() += g * nodes_[b].val;
            if (needs_grad(b)) grad(b).noalias() += g.transpose() * nodes_[a].val;
        });
    }

    int add(int a, int b) {
        M v = nodes_[a].val + nodes_[b].val;
        return record(std::move(v), {a, b}, [this, a, b](int out) {
            const M& g = nodes_[out].grad;
            if (needs_grad(a)) grad(a) += g;
            if (needs_grad(b)) grad(b) += g;
        });
    }

    // Adds the 1 x cols row vector `v` to every row of A.
    int add_rowvec(int a, int v) {
        M out = nodes_[a].val.rowwise() + nodes_[v].val.row(0);
        return record(std::move(out), {a, v}, [this, a, v](int o) {
            const M& g = nodes_[o].grad;
            if (needs_grad(a)) grad(a) += g;
            if (needs_grad(v)) grad(v).row(0) += g.colwise().sum();
        });
    }

    int scale(int a, T c) {
        M v = nodes_[a].val * c;
        return record(std::move(v), {a}, [this, a, c](int out) {
            if (needs_grad(a)) grad(a) += nodes_[out].grad * c;
        });
    }

    int hadamard(int a, int b) {
        M v = nodes_[a].val.cwiseProduct(nodes_[b].val);
        return record(std::move(v), {a, b}, [this, a, b](int out) {
            const M& g = nodes_[out].grad;
            if (needs_grad(a)) grad(a) += g.cwiseProduct(nodes_[b].val);
            if (needs_grad(b)) grad(b) += g.cwiseProduct(nodes_[a].val);
        });
    }

    int sin_of(int a) {
        M v = nodes_[a].val.array().sin().matrix();
        return record(std::move(v), {a}, [this, a](int out) {
            if (needs_grad(a))
                grad(a).array() +=
                    nodes_[out].grad.array() * nodes_[a].val.array().cos();
        });
    }

    int cos_of(int a) {
        M v = nodes_[a].val.array().cos().matrix();
        return record(std::move(v), {a}, [this, a](int out) {
            if (needs_grad(a))
                grad(a).array() -=
                    nodes_[out].grad.array() * nodes_[a].val.array().sin();
        });
    }

    int hcat(int a, int b) {
        const M& va = nodes_[a].val;
        const M& vb = nodes_[b].val;
        M v(va.rows(), va.cols() + vb.cols());
        v << va, vb;
        return record(std::move(v), {a, b}, [this, a, b](int out) {
            const M& g = nodes_[out].grad;
            long ca = nodes_[a].val.cols();
            if (needs_grad(a)) grad(a) += g.leftCols(ca);
            if (needs_grad(b)) grad(b) += g.rightCols(g.cols() - ca);
        });
    }

    int gelu(int a) {
        M v = gelu_eval(nodes_[a].val);
        return record(std::move(v), {a}, [this, a](int out) {
            if (needs_grad(a)) {
                grad(a) += nodes_[out].grad.cwiseProduct(
                    nodes_[a].val.unaryExpr([](T x) { return gelu_deriv(x); }));
            }
        });
    }

    static T gelu_scalar(T x) {
        return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
    }

    static T gelu_deriv(T x) {
        T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
        T pdf = std::exp(-x * x * T(0.5)) * T(0.3989422804014327);
        return cdf + x * pdf;
    }

    static M gelu_eval(const M& x) {
        return x.unaryExpr([](T v) { return gelu_scalar(v); });
    }

    // Row-wise layer normalization with learned 1 x d gain/bias.
    int layer_norm(int a, int gamma, int beta, T eps = T(1e-5)) {
        const M& x = nodes_[a].val;
        M xhat(x.rows(), x.cols());
        Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(x.rows());
        for (long r = 0; r < x.rows(); ++r) {
            T mu = x.row(r).mean();
            T var = (x.row(r).array() - mu).square().mean();
            inv_std(r) = T(1) / std::sqrt(var + eps);
            xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
        }
        M v = (xhat.array().rowwise() * nodes_[gamma].val.row(0).array()).matrix();
        v = v.rowwise() + nodes_[beta].val.row(0);
        return record(std::move(v), {a, gamma, beta},
                      [this, a, gamma, beta, xhat, inv_std](int out) {
                          const M& g = nodes_[out].grad;
                          if (needs_grad(beta)) grad(beta).row(0) += g.colwise().sum();
                          if (needs_grad(gamma))
                              grad(gamma).row(0) += g.cwiseProduct(xhat).colwise().sum();
                          if (needs_grad(a)) {
                              M dxhat =
                                  (g.array().rowwise() * nodes_[gamma].val.row(0).array())
                                      .matrix();
                              M& da = grad(a);
                              const long d = dxhat.cols();
                              for (long r = 0; r < dxhat.rows(); ++r) {
                                  T m1 = dxhat.row(r).sum() / T(d);
                                  T m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).sum() / T(d);
                                  da.row(r) += ((dxhat.row(r).array() - m1 -
                                                 xhat.row(r).array() * m2) *
                                                inv_std(r))
                                                   .matrix();
                              }
                          }
                      });
    }

    // Row-wise softmax of (A + mask). Mask entries are 0 or kMaskOff; every
    // row must keep at least one enabled entry.
    int softmax_masked(int a, const M& mask) {
        M s = nodes_[a].val + mask;
        M p(s.rows(), s.cols());
        for (long r = 0; r < s.rows(); ++r) {
            T m = s.row(r).maxCoeff();
            p.row(r) = (s.row(r).array() - m).exp();
            p.row(r) /= p.row(r).sum();
        }
        return record(std::move(p), {a}, [this, a](int out) {
            if (!needs_grad(a)) return;
            const M& g = nodes_[out].grad;
            const M& p = nodes_[out].val;
            M& da = grad(a);
            for (long r = 0; r < g.rows(); ++r) {
                T dot = g.row(r).cwiseProduct(p.row(r)).sum();
                da.row(r) += (g.row(r).array() - dot).matrix().cwiseProduct(p.row(r));
            }
        });
    }

    // Rotates channel pairs (2k, 2k+1) of each row by the per-row phases in
    // cosp/sinp (n x cols/2). Gradient is the inverse rotation.
    int rope(int a, const M& cosp, const M& sinp) {
        const M& x = nodes_[a].val;
        M v(x.rows(), x.cols());
        const long pairs = x.cols() / 2;
        for (long k = 0; k < pairs; ++k) {
            v.col(2 * k) = x.col(2 * k).cwiseProduct(cosp.col(k)) -
                           x.col(2 * k + 1).cwiseProduct(sinp.col(k));
            v.col(2 * k + 1) = x.col(2 * k).cwiseProduct(sinp.col(k)) +
                               x.col(2 * k + 1).cwiseProduct(cosp.col(k));
        }
        return record(std::move(v), {a}, [this, a, cosp, sinp](int out) {
            if (!needs_grad(a)) return;
            const M& g = nodes_[out].grad;
            M& da = grad(a);
            const long pairs = g.cols() / 2;
            for (long k = 0; k < pairs; ++k) {
                da.col(2 * k) += g.col(2 * k).cwiseProduct(cosp.col(k)) +
                                 g.col(2 * k + 1).cwiseProduct(sinp.col(k));
                da.col(2 * k + 1) += g.col(2 * k + 1).cwiseProduct(cosp.col(k)) -
                                     g.col(2 * k).cwiseProduct(sinp.col(k));
            }
        });
    }

    void backward(int id, const M& seed) {
        grad(id) = seed;
        for (int k = id; k >= 0; --k) {
            Node& n = nodes_[k];
            if (n.back && n.needs_grad && n.grad.size() != 0) n.back(k);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        M val;
        M grad;
        bool needs_grad;
        std::function<void(int)> back;
    };

    int record(M v, std::initializer_list<int> parents, std::function<void(int)> back) {
        bool ng = false;
        for (int p : parents) ng = ng || nodes_[p].needs_grad;
        nodes_.push_back({std::move(v), M(), ng, ng ? std::move(back) : nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
};

}  // namespace trax
