#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "nodags/sem.hpp"

namespace nodags::ad {

// Reverse-mode tape over Eigen matrices. Nodes are appended in evaluation
// order; backward() walks the tape in reverse, accumulating into .grad.
// Scalars are 1x1 matrices.

struct Var {
    int idx = -1;
    [[nodiscard]] bool valid() const { return idx >= 0; }
};

class Tape {
   public:
    Var constant(Eigen::MatrixXd value);
    Var leaf(Eigen::MatrixXd value);

    [[nodiscard]] const Eigen::MatrixXd& value(Var v) const { return nodes_[v.idx].val; }
    [[nodiscard]] const Eigen::MatrixXd& grad(Var v) const;
    [[nodiscard]] double scalar(Var v) const { return value(v)(0, 0); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var matmul(Var a, Var b);     // A * B
    Var matmul_nt(Var a, Var b);  // A * B^T
    Var cwise_mul(Var a, Var b);
    Var square(Var a);
    Var exp(Var a);

    // Broadcast ops against a 1 x d row vector node.
    Var add_rowvec(Var a, Var v);
    Var mul_rowvec(Var a, Var v);

    // Structural ops.
    Var tile_rows(Var a, int times);    // stack `times` copies of a
    Var repeat_rows(Var a, int times);  // each row repeated `times` consecutive times
    Var flatten_rowmajor(Var a);        // (r x c) -> (r*c x 1), row-major order
    Var scale_rows(Var a, Var s);       // s: (rows x 1)
    // (b*d x d) -> (b x d): out(s, i) = a(s*d + i, i)
    Var take_block_diag(Var a, int b, int d);

    Var activation(Var z, Activation act);
    // Elementwise derivative of the activation, as a differentiable node
    // (its backward uses the second derivative; relu contributes zero).
    Var activation_prime(Var z, Activation act);

    Var sum(Var a);  // 1x1
    // sum(a .* w) with a constant weight matrix, 1x1
    Var weighted_sum(Var a, const Eigen::MatrixXd& w);

    // Custom node: `back` receives the upstream gradient of the node and
    // must accumulate into the parents via accumulate_grad.
    Var custom(std::vector<Var> parents, Eigen::MatrixXd value,
               std::function<void(Tape&, const Eigen::MatrixXd&)> back);

    void accumulate_grad(Var v, const Eigen::MatrixXd& g);

    void backward(Var scalar_out);

   private:
    struct Node {
        Eigen::MatrixXd val;
        Eigen::MatrixXd grad;  // empty until touched
        bool requires_grad = false;
        std::function<void(Tape&, const Eigen::MatrixXd&)> back;
    };

    Var push(Eigen::MatrixXd value, bool requires_grad,
             std::function<void(Tape&, const Eigen::MatrixXd&)> back);
    [[nodiscard]] bool any_grad(std::initializer_list<Var> vs) const;

    std::vector<Node> nodes_;
};

}  // namespace nodags::ad
