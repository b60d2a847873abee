#include "lreid/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lreid/errors.hpp"

namespace lreid {

Matrix linear(const Matrix& x, const Parameter& w, const Parameter* bias) {
    if (x.cols != w.value.rows)
        throw ShapeError("linear: input " + x.shape_str() + " does not conform with weight " +
                         w.value.shape_str() + " ('" + w.name + "')");
    if (bias && (bias->value.rows != 1 || bias->value.cols != w.value.cols))
        throw ShapeError("linear: bias " + bias->value.shape_str() + " does not conform with weight " +
                         w.value.shape_str() + " ('" + w.name + "')");
    Matrix y = matmul(x, w.value);
    if (bias) {
        for (int i = 0; i < y.rows; ++i) {
            double* row = y.row_ptr(i);
            const double* b = bias->value.row_ptr(0);
            for (int j = 0; j < y.cols; ++j) row[j] += b[j];
        }
    }
    return y;
}

Matrix linear_backward(const Matrix& x, Parameter& w, Parameter* bias, const Matrix& dy) {
    if (dy.rows != x.rows || dy.cols != w.value.cols)
        throw ShapeError("linear_backward: upstream " + dy.shape_str() + " does not match forward shapes");
    // dW += x^T dy
    for (int i = 0; i < x.rows; ++i) {
        const double* xrow = x.row_ptr(i);
        const double* drow = dy.row_ptr(i);
        for (int k = 0; k < x.cols; ++k) {
            const double xv = xrow[k];
            if (xv == 0.0) continue;
            double* grow = w.grad.row_ptr(k);
            for (int j = 0; j < dy.cols; ++j) grow[j] += xv * drow[j];
        }
    }
    w.grad_ready = true;
    if (bias) {
        double* brow = bias->grad.row_ptr(0);
        for (int i = 0; i < dy.rows; ++i) {
            const double* drow = dy.row_ptr(i);
            for (int j = 0; j < dy.cols; ++j) brow[j] += drow[j];
        }
        bias->grad_ready = true;
    }
    // dx = dy W^T
    Matrix dx(x.rows, x.cols, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        const double* drow = dy.row_ptr(i);
        double* xrow = dx.row_ptr(i);
        for (int k = 0; k < w.value.rows; ++k) {
            const double* wrow = w.value.row_ptr(k);
            double s = 0.0;
            for (int j = 0; j < dy.cols; ++j) s += drow[j] * wrow[j];
            xrow[k] = s;
        }
    }
    return dx;
}

Matrix tanh_forward(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.data) v = std::tanh(v);
    return y;
}

Matrix tanh_backward(const Matrix& y, const Matrix& dy) {
    if (!y.same_shape(dy))
        throw ShapeError("tanh_backward: shape mismatch " + y.shape_str() + " vs " + dy.shape_str());
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= 1.0 - y.data[i] * y.data[i];
    return dx;
}

Matrix softmax_rows(const Matrix& logits) {
    if (!logits.all_finite()) throw NumericError("softmax: non-finite logits");
    Matrix p(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* z = logits.row_ptr(i);
        double* out = p.row_ptr(i);
        double zmax = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < logits.cols; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            out[j] = std::exp(z[j] - zmax);
            sum += out[j];
        }
        for (int j = 0; j < logits.cols; ++j) out[j] /= sum;
    }
    return p;
}

Matrix softmax_backward_rows(const Matrix& probs, const Matrix& dprobs) {
    if (!probs.same_shape(dprobs))
        throw ShapeError("softmax_backward: shape mismatch");
    Matrix dz(probs.rows, probs.cols);
    for (int i = 0; i < probs.rows; ++i) {
        const double* p = probs.row_ptr(i);
        const double* dp = dprobs.row_ptr(i);
        double inner = 0.0;
        for (int j = 0; j < probs.cols; ++j) inner += p[j] * dp[j];
        double* out = dz.row_ptr(i);
        for (int j = 0; j < probs.cols; ++j) out[j] = p[j] * (dp[j] - inner);
    }
    return dz;
}

Vec softmax_vec(const Vec& logits) {
    Matrix m(1, static_cast<int>(logits.size()));
    std::copy(logits.begin(), logits.end(), m.data.begin());
    return softmax_rows(m).row(0);
}

Vec softmax_backward_vec(const Vec& probs, const Vec& dprobs) {
    double inner = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) inner += probs[j] * dprobs[j];
    Vec dz(probs.size());
    for (std::size_t j = 0; j < probs.size(); ++j) dz[j] = probs[j] * (dprobs[j] - inner);
    return dz;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits) {
    if (static_cast<int>(labels.size()) != logits.rows)
        throw ShapeError("cross_entropy: label count does not match batch rows");
    for (int lbl : labels)
        if (lbl < 0 || lbl >= logits.cols)
            throw LabelError("cross_entropy: label " + std::to_string(lbl) + " outside [0, " +
                             std::to_string(logits.cols) + ")");
    const Matrix probs = softmax_rows(logits);
    const double b = static_cast<double>(logits.rows);
    double loss = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        const double p = probs.at(i, labels[static_cast<std::size_t>(i)]);
        loss -= std::log(std::max(p, 1e-300));
    }
    loss /= b;
    if (dlogits) {
        *dlogits = probs;
        for (int i = 0; i < logits.rows; ++i) dlogits->at(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        scale_inplace(*dlogits, 1.0 / b);
    }
    return loss;
}

double cosine_similarity(const Vec& a, const Vec& b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na <= kNormEps || nb <= kNormEps)
        throw DegenerateVectorError("cosine_similarity: vector norm below " + std::to_string(kNormEps));
    return dot(a, b) / (na * nb);
}

void cosine_backward_into(const Vec& a, const Vec& b, double upstream, Vec& da) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na <= kNormEps || nb <= kNormEps)
        throw DegenerateVectorError("cosine_backward: vector norm below " + std::to_string(kNormEps));
    const double c = dot(a, b) / (na * nb);
    for (std::size_t i = 0; i < a.size(); ++i)
        da[i] += upstream * (b[i] / (na * nb) - c * a[i] / (na * na));
}

Matrix l2_normalize_rows(const Matrix& x, Vec* norms) {
    Matrix y = x;
    if (norms) norms->assign(static_cast<std::size_t>(x.rows), 0.0);
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        const double* row = x.row_ptr(i);
        for (int j = 0; j < x.cols; ++j) s += row[j] * row[j];
        const double n = std::sqrt(s);
        if (n <= kNormEps)
            throw DegenerateVectorError("l2_normalize_rows: row " + std::to_string(i) + " has near-zero norm");
        if (norms) (*norms)[static_cast<std::size_t>(i)] = n;
        double* out = y.row_ptr(i);
        for (int j = 0; j < x.cols; ++j) out[j] /= n;
    }
    return y;
}

Matrix l2_normalize_backward(const Matrix& y, const Vec& norms, const Matrix& dy) {
    Matrix dx(y.rows, y.cols);
    for (int i = 0; i < y.rows; ++i) {
        const double* yr = y.row_ptr(i);
        const double* dr = dy.row_ptr(i);
        double inner = 0.0;
        for (int j = 0; j < y.cols; ++j) inner += yr[j] * dr[j];
        double* out = dx.row_ptr(i);
        const double n = norms[static_cast<std::size_t>(i)];
        for (int j = 0; j < y.cols; ++j) out[j] = (dr[j] - inner * yr[j]) / n;
    }
    return dx;
}

double batch_hard_triplet(const Matrix& features, const std::vector<int>& identities, double margin,
                          Matrix* dfeatures) {
    const int b = features.rows;
    if (static_cast<int>(identities.size()) != b)
        throw ShapeError("batch_hard_triplet: identity count does not match batch rows");
    bool multiple_ids = false;
    for (int i = 1; i < b; ++i)
        if (identities[static_cast<std::size_t>(i)] != identities[0]) multiple_ids = true;
    if (!multiple_ids)
        throw ProtocolError("batch_hard_triplet: batch contains a single identity; no negatives exist");

    Vec norms;
    const Matrix fhat = l2_normalize_rows(features, &norms);

    // Pairwise Euclidean distances on the normalized rows.
    Matrix dist(b, b, 0.0);
    for (int i = 0; i < b; ++i) {
        for (int j = i + 1; j < b; ++j) {
            double s = 0.0;
            const double* ri = fhat.row_ptr(i);
            const double* rj = fhat.row_ptr(j);
            for (int k = 0; k < fhat.cols; ++k) {
                const double d = ri[k] - rj[k];
                s += d * d;
            }
            const double d = std::sqrt(s);
            dist.at(i, j) = d;
            dist.at(j, i) = d;
        }
    }

    struct AnchorPick {
        int pos = -1, neg = -1;
        double hinge = 0.0;
    };
    std::vector<AnchorPick> picks(static_cast<std::size_t>(b));
    int contributing = 0;
    double total = 0.0;
    for (int a = 0; a < b; ++a) {
        double hardest_pos = -1.0;
        int pos_idx = -1;
        double hardest_neg = std::numeric_limits<double>::infinity();
        int neg_idx = -1;
        for (int j = 0; j < b; ++j) {
            if (j == a) continue;
            if (identities[static_cast<std::size_t>(j)] == identities[static_cast<std::size_t>(a)]) {
                if (dist.at(a, j) > hardest_pos) {
                    hardest_pos = dist.at(a, j);
                    pos_idx = j;
                }
            } else if (dist.at(a, j) < hardest_neg) {
                hardest_neg = dist.at(a, j);
                neg_idx = j;
            }
        }
        if (pos_idx < 0 || neg_idx < 0) continue; // anchor without a positive (or negative) pair
        const double hinge = hardest_pos - hardest_neg + margin;
        if (hinge > 0.0) {
            picks[static_cast<std::size_t>(a)] = {pos_idx, neg_idx, hinge};
        }
        total += std::max(0.0, hinge);
        ++contributing;
    }
    if (contributing == 0)
        throw ProtocolError("batch_hard_triplet: no anchor has both a positive and a negative");
    const double loss = total / contributing;

    if (dfeatures) {
        Matrix dhat(b, fhat.cols, 0.0);
        const double w = 1.0 / contributing;
        for (int a = 0; a < b; ++a) {
            const auto& p = picks[static_cast<std::size_t>(a)];
            if (p.pos < 0) continue;
            // d|u-v| / du = (u-v)/|u-v|; zero subgradient at coincident points.
            const double dp = dist.at(a, p.pos);
            if (dp > 0.0) {
                for (int k = 0; k < fhat.cols; ++k) {
                    const double g = w * (fhat.at(a, k) - fhat.at(p.pos, k)) / dp;
                    dhat.at(a, k) += g;
                    dhat.at(p.pos, k) -= g;
                }
            }
            const double dn = dist.at(a, p.neg);
            if (dn > 0.0) {
                for (int k = 0; k < fhat.cols; ++k) {
                    const double g = w * (fhat.at(a, k) - fhat.at(p.neg, k)) / dn;
                    dhat.at(a, k) -= g;
                    dhat.at(p.neg, k) += g;
                }
            }
        }
        Matrix dx = l2_normalize_backward(fhat, norms, dhat);
        if (dfeatures->rows == 0) *dfeatures = Matrix(b, features.cols, 0.0);
        add_inplace(*dfeatures, dx);
    }
    return loss;
}

} // namespace lreid
