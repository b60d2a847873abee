#pragma once

#include <string>
#include <vector>

#include "lreid/matrix.hpp"
#include "lreid/rng.hpp"

namespace lreid {

// A learnable weight with its gradient accumulator. grad_ready tracks
// whether any backward pass has written into grad since the last step.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool decay = true; // weight-decay eligibility (biases and prompt tokens opt out)
    bool grad_ready = false;

    Parameter() = default;
    Parameter(std::string n, int rows, int cols, bool apply_decay = true)
        : name(std::move(n)), value(rows, cols), grad(rows, cols), decay(apply_decay) {}

    void zero_grad() {
        grad.fill(0.0);
        grad_ready = false;
    }
    void init_gaussian(Rng rng, double sigma) {
        for (double& v : value.data) v = rng.gaussian(0.0, sigma);
    }
    std::size_t size() const { return value.data.size(); }
};

// y = x W + bias (bias broadcast over rows; bias may be null).
Matrix linear(const Matrix& x, const Parameter& w, const Parameter* bias);

// Given dL/dy, accumulate dL/dW and dL/db, return dL/dx.
Matrix linear_backward(const Matrix& x, Parameter& w, Parameter* bias, const Matrix& dy);

Matrix tanh_forward(const Matrix& x);
// y is the forward output; returns dL/dx given dL/dy.
Matrix tanh_backward(const Matrix& y, const Matrix& dy);

// Row-wise softmax; throws NumericError on non-finite logits.
Matrix softmax_rows(const Matrix& logits);
// Jacobian-vector product through a row softmax: dz_i = p_i (dp_i - sum_j p_j dp_j).
Matrix softmax_backward_rows(const Matrix& probs, const Matrix& dprobs);
Vec softmax_vec(const Vec& logits);
Vec softmax_backward_vec(const Vec& probs, const Vec& dprobs);

// Mean negative log-softmax of the true class. Optional gradient w.r.t.
// logits is (softmax - one_hot) / batch.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits = nullptr);

inline constexpr double kNormEps = 1e-8;

// a.b / (|a||b|); throws DegenerateVectorError when either norm <= kNormEps.
double cosine_similarity(const Vec& a, const Vec& b);
// Accumulates upstream * d cos(a,b)/da into da (b treated as constant).
void cosine_backward_into(const Vec& a, const Vec& b, double upstream, Vec& da);

// Rows scaled to unit L2 norm; throws DegenerateVectorError on a near-zero row.
Matrix l2_normalize_rows(const Matrix& x, Vec* norms = nullptr);
// Backward through row normalization: dx_i = (dy_i - (y_i . dy_i) y_i) / norm_i.
Matrix l2_normalize_backward(const Matrix& y, const Vec& norms, const Matrix& dy);

// Batch-hard triplet loss on unit-normalized rows with Euclidean distances:
// mean over anchors (with >=1 positive and >=1 negative) of
// max(0, hardest_positive - hardest_negative + margin).
// Optional subgradient w.r.t. the raw (unnormalized) features.
double batch_hard_triplet(const Matrix& features, const std::vector<int>& identities, double margin,
                          Matrix* dfeatures = nullptr);

} // namespace lreid
