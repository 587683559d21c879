#include "nodags/autodiff.hpp"

#include <stdexcept>

namespace nodags::ad {

Var Tape::push(Eigen::MatrixXd value, bool requires_grad,
               std::function<void(Tape&, const Eigen::MatrixXd&)> back) {
    nodes_.push_back(Node{std::move(value), Eigen::MatrixXd(), requires_grad, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

bool Tape::any_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs) {
        if (v.valid() && nodes_[v.idx].requires_grad) {
            return true;
        }
    }
    return false;
}

Var Tape::constant(Eigen::MatrixXd value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Eigen::MatrixXd value) { return push(std::move(value), true, nullptr); }

const Eigen::MatrixXd& Tape::grad(Var v) const {
    const Node& node = nodes_[v.idx];
    if (node.grad.size() == 0) {
        static thread_local Eigen::MatrixXd zero;
        zero = Eigen::MatrixXd::Zero(node.val.rows(), node.val.cols());
        return zero;
    }
    return node.grad;
}

void Tape::accumulate_grad(Var v, const Eigen::MatrixXd& g) {
    Node& node = nodes_[v.idx];
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.size() == 0) {
        node.grad = Eigen::MatrixXd::Zero(node.val.rows(), node.val.cols());
    }
    node.grad += g;
}

Var Tape::add(Var a, Var b) {
    return push(value(a) + value(b), any_grad({a, b}),
                [a, b](Tape& t, const Eigen::MatrixXd& up) {
                    t.accumulate_grad(a, up);
                    t.accumulate_grad(b, up);
                });
}

Var Tape::sub(Var a, Var b) {
    return push(value(a) - value(b), any_grad({a, b}),
                [a, b](Tape& t, const Eigen::MatrixXd& up) {
                    t.accumulate_grad(a, up);
                    t.accumulate_grad(b, -up);
                });
}

Var Tape::neg(Var a) {
    return push(-value(a), any_grad({a}),
                [a](Tape& t, const Eigen::MatrixXd& up) { t.accumulate_grad(a, -up); });
}

Var Tape::scale(Var a, double s) {
    return push(value(a) * s, any_grad({a}),
                [a, s](Tape& t, const Eigen::MatrixXd& up) { t.accumulate_grad(a, up * s); });
}

Var Tape::add_scalar(Var a, double s) {
    return push(value(a).array() + s, any_grad({a}),
                [a](Tape& t, const Eigen::MatrixXd& up) { t.accumulate_grad(a, up); });
}

Var Tape::matmul(Var a, Var b) {
    return push(value(a) * value(b), any_grad({a, b}),
                [a, b](Tape& t, const Eigen::MatrixXd& up) {
                    t.accumulate_grad(a, up * t.value(b).transpose());
                    t.accumulate_grad(b, t.value(a).transpose() * up);
                });
}

Var Tape::matmul_nt(Var a, Var b) {
    return push(value(a) * value(b).transpose(), any_grad({a, b}),
                [a, b](Tape& t, const Eigen::MatrixXd& up) {
                    t.accumulate_grad(a, up * t.value(b));
                    t.accumulate_grad(b, up.transpose() * t.value(a));
                });
}

Var Tape::cwise_mul(Var a, Var b) {
    return push(value(a).cwiseProduct(value(b)), any_grad({a, b}),
                [a, b](Tape& t, const Eigen::MatrixXd& up) {
                    t.accumulate_grad(a, up.cwiseProduct(t.value(b)));
                    t.accumulate_grad(b, up.cwiseProduct(t.value(a)));
                });
}

Var Tape::square(Var a) {
    return push(value(a).array().square(), any_grad({a}),
                [a](Tape& t, const Eigen::MatrixXd& up) {
                    t.accumulate_grad(a, 2.0 * up.cwiseProduct(t.value(a)));
                });
}

Var Tape::exp(Var a) {
    Eigen::MatrixXd e = value(a).array().exp();
    return push(e, any_grad({a}), [a, e](Tape& t, const Eigen::MatrixXd& up) {
        t.accumulate_grad(a, up.cwiseProduct(e));
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    Eigen::MatrixXd out = value(a);
    out.rowwise() += value(v).row(0);
    return push(std::move(out), any_grad({a, v}), [a, v](Tape& t, const Eigen::MatrixXd& up) {
        t.accumulate_grad(a, up);
        t.accumulate_grad(v, up.colwise().sum());
    });
}

Var Tape::mul_rowvec(Var a, Var v) {
    Eigen::MatrixXd out = value(a);
    out.array().rowwise() *= value(v).row(0).array();
    return push(std::move(out), any_grad({a, v}), [a, v](Tape& t, const Eigen::MatrixXd& up) {
        Eigen::MatrixXd ga = up;
        ga.array().rowwise() *= t.value(v).row(0).array();
        t.accumulate_grad(a, ga);
        t.accumulate_grad(v, up.cwiseProduct(t.value(a)).colwise().sum());
    });
}

Var Tape::tile_rows(Var a, int times) {
    const Eigen::MatrixXd& m = value(a);
    const auto r = m.rows();
    Eigen::MatrixXd out(r * times, m.cols());
    for (int k = 0; k < times; ++k) {
        out.middleRows(k * r, r) = m;
    }
    return push(std::move(out), any_grad({a}), [a, times, r](Tape& t, const Eigen::MatrixXd& up) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(r, up.cols());
        for (int k = 0; k < times; ++k) {
            g += up.middleRows(k * r, r);
        }
        t.accumulate_grad(a, g);
    });
}

Var Tape::repeat_rows(Var a, int times) {
    const Eigen::MatrixXd& m = value(a);
    const auto r = m.rows();
    Eigen::MatrixXd out(r * times, m.cols());
    for (Eigen::Index i = 0; i < r; ++i) {
        for (int k = 0; k < times; ++k) {
            out.row(i * times + k) = m.row(i);
        }
    }
    return push(std::move(out), any_grad({a}), [a, times, r](Tape& t, const Eigen::MatrixXd& up) {
        Eigen::MatrixXd g(r, up.cols());
        for (Eigen::Index i = 0; i < r; ++i) {
            g.row(i) = up.middleRows(i * times, times).colwise().sum();
        }
        t.accumulate_grad(a, g);
    });
}

Var Tape::flatten_rowmajor(Var a) {
    const Eigen::MatrixXd& m = value(a);
    const auto r = m.rows();
    const auto c = m.cols();
    Eigen::MatrixXd out(r * c, 1);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            out(i * c + j, 0) = m(i, j);
        }
    }
    return push(std::move(out), any_grad({a}), [a, r, c](Tape& t, const Eigen::MatrixXd& up) {
        Eigen::MatrixXd g(r, c);
        for (Eigen::Index i = 0; i < r; ++i) {
            for (Eigen::Index j = 0; j < c; ++j) {
                g(i, j) = up(i * c + j, 0);
            }
        }
        t.accumulate_grad(a, g);
    });
}

Var Tape::scale_rows(Var a, Var s) {
    Eigen::MatrixXd out = value(a);
    out.array().colwise() *= value(s).col(0).array();
    return push(std::move(out), any_grad({a, s}), [a, s](Tape& t, const Eigen::MatrixXd& up) {
        Eigen::MatrixXd ga = up;
        ga.array().colwise() *= t.value(s).col(0).array();
        t.accumulate_grad(a, ga);
        t.accumulate_grad(s, up.cwiseProduct(t.value(a)).rowwise().sum());
    });
}

Var Tape::take_block_diag(Var a, int b, int d) {
    const Eigen::MatrixXd& m = value(a);
    if (m.rows() != static_cast<Eigen::Index>(b) * d || m.cols() != d) {
        throw std::invalid_argument("take_block_diag shape mismatch");
    }
    Eigen::MatrixXd out(b, d);
    for (int s = 0; s < b; ++s) {
        for (int i = 0; i < d; ++i) {
            out(s, i) = m(s * d + i, i);
        }
    }
    return push(std::move(out), any_grad({a}), [a, b, d](Tape& t, const Eigen::MatrixXd& up) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b) * d, d);
        for (int s = 0; s < b; ++s) {
            for (int i = 0; i < d; ++i) {
                g(s * d + i, i) = up(s, i);
            }
        }
        t.accumulate_grad(a, g);
    });
}

Var Tape::activation(Var z, Activation act) {
    Eigen::MatrixXd out = apply_activation(act, value(z).array());
    return push(std::move(out), any_grad({z}), [z, act](Tape& t, const Eigen::MatrixXd& up) {
        const Eigen::MatrixXd deriv = activation_derivative(act, t.value(z).array());
        t.accumulate_grad(z, up.cwiseProduct(deriv));
    });
}

Var Tape::activation_prime(Var z, Activation act) {
    Eigen::MatrixXd out = activation_derivative(act, value(z).array());
    switch (act) {
        case Activation::linear:
        case Activation::relu:
            // Second derivative is zero (a.e. for relu); no gradient flows.
            return push(std::move(out), false, nullptr);
        case Activation::tanh:
            return push(std::move(out), any_grad({z}),
                        [z](Tape& t, const Eigen::MatrixXd& up) {
                            const Eigen::ArrayXXd th = t.value(z).array().tanh();
                            const Eigen::MatrixXd second = (-2.0 * th * (1.0 - th.square())).matrix();
                            t.accumulate_grad(z, up.cwiseProduct(second));
                        });
        case Activation::selu:
            throw std::invalid_argument("selu is not supported in the learned mechanism");
    }
    throw std::logic_error("unreachable");
}

Var Tape::sum(Var a) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), any_grad({a}), [a](Tape& t, const Eigen::MatrixXd& up) {
        t.accumulate_grad(a, Eigen::MatrixXd::Constant(t.value(a).rows(), t.value(a).cols(), up(0, 0)));
    });
}

Var Tape::weighted_sum(Var a, const Eigen::MatrixXd& w) {
    Eigen::MatrixXd out(1, 1);
    out(0, 0) = value(a).cwiseProduct(w).sum();
    return push(std::move(out), any_grad({a}), [a, w](Tape& t, const Eigen::MatrixXd& up) {
        t.accumulate_grad(a, up(0, 0) * w);
    });
}

Var Tape::custom(std::vector<Var> parents, Eigen::MatrixXd value,
                 std::function<void(Tape&, const Eigen::MatrixXd&)> back) {
    bool req = false;
    for (Var p : parents) {
        if (p.valid() && nodes_[p.idx].requires_grad) {
            req = true;
        }
    }
    return push(std::move(value), req, std::move(back));
}

void Tape::backward(Var scalar_out) {
    Node& out = nodes_[scalar_out.idx];
    if (out.val.rows() != 1 || out.val.cols() != 1) {
        throw std::invalid_argument("backward expects a scalar output node");
    }
    out.grad = Eigen::MatrixXd::Ones(1, 1);
    for (int i = scalar_out.idx; i >= 0; --i) {
        Node& node = nodes_[i];
        if (node.grad.size() == 0 || !node.back) {
            continue;
        }
        node.back(*this, node.grad);
    }
}

}  // namespace nodags::ad
