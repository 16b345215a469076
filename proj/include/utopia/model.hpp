#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "utopia/dataset.hpp"
#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/rng.hpp"
#include "utopia/scaler.hpp"
#include "utopia/schema.hpp"

namespace utopia {

enum class Activation : std::uint8_t { relu = 0 };

/// Small feed-forward classifier over standardized numeric features plus one
/// learned embedding table per categorical feature. The network input is
/// [numeric_std | emb_0 | ... | emb_{k-1}]; hidden layers use ReLU, the last
/// layer emits raw logits. Empty hidden_dims gives plain logistic regression.
struct SurrogateModel {
    Schema schema;
    ScalerStats scaler; // fitted by train(); identity-sized until then
    int embed_width = 0;
    Activation activation = Activation::relu;
    std::vector<Matrix> weights;              // layer l: out x in
    std::vector<std::vector<double>> biases;  // layer l: out
    std::vector<Matrix> embeddings;           // per cat feature: tokens x embed_width

    std::size_t d_num() const { return schema.d_num(); }
    std::size_t d_cat() const { return schema.d_cat(); }
    int num_classes() const { return schema.num_classes; }

    std::size_t input_dim() const {
        return d_num() + d_cat() * static_cast<std::size_t>(embed_width);
    }
    std::size_t embed_offset(std::size_t cat_feature) const {
        return d_num() + cat_feature * static_cast<std::size_t>(embed_width);
    }
};

/// Gradient of the per-row loss with respect to the inputs: standardized
/// numeric coordinates directly, and for each categorical feature the scores
/// against every token's embedding row (the gradient w.r.t. that feature's
/// one-hot selector).
struct InputGradient {
    std::vector<double> numeric_grad;
    std::vector<std::vector<double>> cat_token_scores;
};

struct ParamGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    std::vector<Matrix> embeddings;

    static ParamGrads zeros_like(const SurrogateModel& m) {
        ParamGrads g;
        for (const auto& w : m.weights) g.weights.emplace_back(w.rows(), w.cols());
        for (const auto& b : m.biases) g.biases.emplace_back(b.size(), 0.0);
        for (const auto& e : m.embeddings) g.embeddings.emplace_back(e.rows(), e.cols());
        return g;
    }

    void scale(double c) {
        for (auto& w : weights)
            for (auto& v : w.data()) v *= c;
        for (auto& b : biases)
            for (auto& v : b) v *= c;
        for (auto& e : embeddings)
            for (auto& v : e.data()) v *= c;
    }
};

/// Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, biases
/// zero, embedding rows from U(-1/sqrt(embed_width), 1/sqrt(embed_width));
/// draw order is fixed, so identical seeds give identical parameters.
inline SurrogateModel init_model(const Schema& schema, const std::vector<int>& hidden_dims,
                                 int embed_width, std::uint64_t seed) {
    validate_schema(schema);
    SurrogateModel m;
    m.schema = schema;
    if (schema.d_cat() > 0 && embed_width < 1)
        throw ValidationError("init_model: embed_width must be >= 1 with categorical features");
    m.embed_width = schema.d_cat() > 0 ? embed_width : 0;
    m.scaler.mean.assign(schema.d_num(), 0.0);
    m.scaler.std.assign(schema.d_num(), 1.0);

    std::vector<std::size_t> dims;
    dims.push_back(m.input_dim());
    for (int h : hidden_dims) {
        if (h < 1) throw ValidationError("init_model: hidden dims must be >= 1");
        dims.push_back(static_cast<std::size_t>(h));
    }
    dims.push_back(static_cast<std::size_t>(schema.num_classes));

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (auto& v : w.data()) v = rng.uniform(-bound, bound);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(dims[l + 1], 0.0);
    }
    for (std::size_t j = 0; j < schema.d_cat(); ++j) {
        const auto& f = schema.categorical_feature(j);
        Matrix e(f.tokens.size(), static_cast<std::size_t>(m.embed_width));
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.embed_width));
        for (auto& v : e.data()) v = rng.uniform(-bound, bound);
        m.embeddings.push_back(std::move(e));
    }
    return m;
}

// Reusable buffers for forward/backward passes.
struct NetScratch {
    std::vector<std::vector<double>> pre;  // pre-activations per layer
    std::vector<std::vector<double>> post; // post-activations (post[0] = input)
    std::vector<double> probs;
    std::vector<double> gcur, gprev;
    std::vector<double> input;
    std::vector<double> target;
};

inline void build_input(const SurrogateModel& m, std::span<const double> numeric_std,
                        std::span<const std::int32_t> tokens, std::vector<double>& out) {
    out.resize(m.input_dim());
    std::copy(numeric_std.begin(), numeric_std.end(), out.begin());
    for (std::size_t j = 0; j < m.d_cat(); ++j) {
        const auto row = m.embeddings[j].row(static_cast<std::size_t>(tokens[j]));
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(m.embed_offset(j)));
    }
}

inline void forward_logits(const SurrogateModel& m, std::span<const double> input,
                           NetScratch& ws) {
    const std::size_t L = m.weights.size();
    ws.pre.resize(L);
    ws.post.resize(L + 1);
    ws.post[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < L; ++l) {
        const auto& W = m.weights[l];
        const auto& b = m.biases[l];
        auto& z = ws.pre[l];
        z.resize(W.rows());
        for (std::size_t o = 0; o < W.rows(); ++o)
            z[o] = b[o] + dot(W.row(o), ws.post[l]);
        auto& a = ws.post[l + 1];
        a = z;
        if (l + 1 < L)
            for (auto& v : a) v = v > 0.0 ? v : 0.0;
    }
}

// Softmax cross-entropy against a target distribution; fills ws.probs.
inline double softmax_xent(std::span<const double> logits, std::span<const double> target,
                           std::vector<double>& probs) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    probs.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        probs[k] = std::exp(logits[k] - mx);
        z += probs[k];
    }
    const double lse = mx + std::log(z);
    double loss = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        probs[k] /= z;
        if (target[k] != 0.0) loss += target[k] * (lse - logits[k]);
    }
    return loss;
}

/// Loss and gradients for one prebuilt input vector against a target class
/// distribution. Accumulates weight/bias gradients into `pg` when non-null
/// and writes the gradient w.r.t. the input vector into `input_grad` when
/// non-null. Embedding gradients are the caller's job (scatter the input-grad
/// slice into the right table rows).
inline double input_loss_grads(const SurrogateModel& m, std::span<const double> input,
                               std::span<const double> target, ParamGrads* pg,
                               std::vector<double>* input_grad, NetScratch& ws) {
    forward_logits(m, input, ws);
    const std::size_t L = m.weights.size();
    const double loss = softmax_xent(ws.pre[L - 1], target, ws.probs);

    ws.gcur.resize(ws.probs.size());
    for (std::size_t k = 0; k < ws.probs.size(); ++k) ws.gcur[k] = ws.probs[k] - target[k];

    for (std::size_t li = L; li-- > 0;) {
        const auto& W = m.weights[li];
        if (pg) {
            auto& gw = pg->weights[li];
            auto& gb = pg->biases[li];
            const auto& act = ws.post[li];
            for (std::size_t o = 0; o < W.rows(); ++o) {
                const double g = ws.gcur[o];
                if (g == 0.0) continue;
                gb[o] += g;
                auto grow = gw.row(o);
                for (std::size_t i = 0; i < W.cols(); ++i) grow[i] += g * act[i];
            }
        }
        const bool need_back = li > 0 || input_grad != nullptr;
        if (!need_back) break;
        ws.gprev.assign(W.cols(), 0.0);
        for (std::size_t o = 0; o < W.rows(); ++o) {
            const double g = ws.gcur[o];
            if (g == 0.0) continue;
            const auto wrow = W.row(o);
            for (std::size_t i = 0; i < W.cols(); ++i) ws.gprev[i] += g * wrow[i];
        }
        if (li > 0) {
            const auto& z = ws.pre[li - 1];
            for (std::size_t i = 0; i < ws.gprev.size(); ++i)
                if (z[i] <= 0.0) ws.gprev[i] = 0.0;
        }
        std::swap(ws.gcur, ws.gprev);
    }
    if (input_grad) *input_grad = ws.gcur;
    return loss;
}

inline void one_hot(int label, int num_classes, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(num_classes), 0.0);
    out[static_cast<std::size_t>(label)] = 1.0;
}

/// Per-row loss/gradients in standardized input space. Handles embedding
/// lookup, embedding-table gradient scatter, and token scores.
inline double row_loss_grads(const SurrogateModel& m, std::span<const double> numeric_std,
                             std::span<const std::int32_t> tokens, int label,
                             ParamGrads* pg, InputGradient* ig, NetScratch& ws) {
    build_input(m, numeric_std, tokens, ws.input);
    one_hot(label, m.num_classes(), ws.target);
    const bool need_input_grad = ig != nullptr || (pg != nullptr && m.d_cat() > 0);
    std::vector<double> input_grad;
    const double loss = input_loss_grads(m, ws.input, ws.target, pg,
                                         need_input_grad ? &input_grad : nullptr, ws);
    if (pg) {
        for (std::size_t j = 0; j < m.d_cat(); ++j) {
            const std::size_t off = m.embed_offset(j);
            auto erow = pg->embeddings[j].row(static_cast<std::size_t>(tokens[j]));
            for (std::size_t i = 0; i < static_cast<std::size_t>(m.embed_width); ++i)
                erow[i] += input_grad[off + i];
        }
    }
    if (ig) {
        ig->numeric_grad.assign(input_grad.begin(),
                                input_grad.begin() + static_cast<std::ptrdiff_t>(m.d_num()));
        ig->cat_token_scores.resize(m.d_cat());
        for (std::size_t j = 0; j < m.d_cat(); ++j) {
            const std::size_t off = m.embed_offset(j);
            const auto& table = m.embeddings[j];
            auto& scores = ig->cat_token_scores[j];
            scores.assign(table.rows(), 0.0);
            for (std::size_t t = 0; t < table.rows(); ++t) {
                const auto trow = table.row(t);
                double sc = 0.0;
                for (std::size_t i = 0; i < trow.size(); ++i) sc += input_grad[off + i] * trow[i];
                scores[t] = sc;
            }
        }
    }
    return loss;
}

struct LossGrads {
    double loss = 0.0;
    ParamGrads params;
    std::vector<InputGradient> inputs;
};

/// Mean cross-entropy and exact gradients over a batch given in standardized
/// form (rows of `numeric_std` aligned with rows of `cat` and `labels`).
inline LossGrads loss_and_grads(const SurrogateModel& m, const Matrix& numeric_std,
                                const IndexMatrix& cat, const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    if (n == 0) throw ValidationError("loss_and_grads: empty batch");
    LossGrads out;
    out.params = ParamGrads::zeros_like(m);
    out.inputs.resize(n);
    NetScratch ws;
    for (std::size_t r = 0; r < n; ++r) {
        out.loss += row_loss_grads(m, numeric_std.row(r),
                                   cat.cols() > 0 ? cat.row(r) : std::span<const std::int32_t>{},
                                   labels[r], &out.params, &out.inputs[r], ws);
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.loss *= inv;
    out.params.scale(inv);
    if (!std::isfinite(out.loss)) throw NumericError("loss_and_grads: non-finite loss");
    return out;
}

inline int predict_row(const SurrogateModel& m, std::span<const double> numeric_std,
                       std::span<const std::int32_t> tokens, NetScratch& ws) {
    build_input(m, numeric_std, tokens, ws.input);
    forward_logits(m, ws.input, ws);
    const auto& logits = ws.pre.back();
    int best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best; // ties keep the lowest class index
}

/// Clean argmax accuracy; inputs standardized with the model's own scaler.
inline double accuracy(const SurrogateModel& m, const Dataset& d) {
    if (d.n_rows() == 0) throw ValidationError("accuracy: empty dataset");
    const Matrix xs = standardize(d, m.scaler);
    NetScratch ws;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        const int p = predict_row(m, xs.row(r),
                                  d.d_cat() > 0 ? d.categorical.row(r)
                                                : std::span<const std::int32_t>{},
                                  ws);
        if (p == d.labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(d.n_rows());
}

} // namespace utopia
