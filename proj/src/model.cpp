#include "lreid/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lreid/errors.hpp"

namespace lreid {

Variant variant_from_string(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "sft") return Variant::Sft;
    if (name == "no_casp") return Variant::NoCasp;
    if (name == "no_ctx") return Variant::NoCtx;
    if (name == "no_akfp") return Variant::NoAkfp;
    if (name == "no_lproj") return Variant::NoLproj;
    if (name == "single_prototype") return Variant::SinglePrototype;
    throw ConfigError("unknown variant '" + name +
                      "' (expected one of: full, sft, no_casp, no_ctx, no_akfp, no_lproj, single_prototype)");
}

const char* to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::Sft: return "sft";
        case Variant::NoCasp: return "no_casp";
        case Variant::NoCtx: return "no_ctx";
        case Variant::NoAkfp: return "no_akfp";
        case Variant::NoLproj: return "no_lproj";
        case Variant::SinglePrototype: return "single_prototype";
    }
    return "?";
}

void IdentityHead::init(std::uint64_t seed_value, const std::string& name_prefix) {
    seed = seed_value;
    w = Parameter(name_prefix + ".w", kFeatureDim, 0);
    b = Parameter(name_prefix + ".b", 1, 0, false);
    ids_by_column.clear();
    column_of.clear();
}

void IdentityHead::ensure_identities(std::vector<int> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<int> fresh;
    for (int id : ids)
        if (!column_of.count(id)) fresh.push_back(id);
    if (fresh.empty()) return;

    const int old_cols = w.value.cols;
    const int new_cols = old_cols + static_cast<int>(fresh.size());
    Matrix new_w(kFeatureDim, new_cols);
    Matrix new_b(1, new_cols);
    for (int i = 0; i < kFeatureDim; ++i)
        for (int j = 0; j < old_cols; ++j) new_w.at(i, j) = w.value.at(i, j);
    for (int j = 0; j < old_cols; ++j) new_b.at(0, j) = b.value.at(0, j);
    for (std::size_t k = 0; k < fresh.size(); ++k) {
        const int id = fresh[k];
        const int col = old_cols + static_cast<int>(k);
        // Columns are seeded by identity, so growth order cannot change them.
        Rng col_rng = Rng(seed).stream(w.name + "/col/" + std::to_string(id));
        for (int i = 0; i < kFeatureDim; ++i) new_w.at(i, col) = col_rng.gaussian(0.0, 0.01);
        new_b.at(0, col) = 0.0;
        ids_by_column.push_back(id);
        column_of[id] = col;
    }
    w.value = std::move(new_w);
    w.grad = Matrix(kFeatureDim, new_cols);
    w.grad_ready = false;
    b.value = std::move(new_b);
    b.grad = Matrix(1, new_cols);
    b.grad_ready = false;
}

void IdentityHead::restore_columns(const std::vector<int>& ids_in_column_order) {
    ids_by_column.clear();
    column_of.clear();
    w.value = Matrix(kFeatureDim, 0);
    w.grad = Matrix(kFeatureDim, 0);
    b.value = Matrix(1, 0);
    b.grad = Matrix(1, 0);
    for (int id : ids_in_column_order) ensure_identities({id});
}

int IdentityHead::column_for(int identity) const {
    const auto it = column_of.find(identity);
    if (it == column_of.end())
        throw ProtocolError("identity head does not cover identity " + std::to_string(identity));
    return it->second;
}

void Model::init(std::uint64_t seed_value, int latent_dimension, const ModelSettings& model_settings) {
    settings = model_settings;
    seed = seed_value;
    latent_dim = latent_dimension;
    const Rng root(seed_value);
    visual.init(latent_dimension, root.stream("model/visual"));
    text.init(root.stream("model/text"));
    ctx.init(root.stream("model/ctx"));
    prompts.init(root.stream("model/prompts"));
    state_cls.init(root.stream("model/state"));
    proj.init(root.stream("model/proj"));
    id_head.init(seed_value, "idhead");
    casp_head_w = Parameter("casphead.w", kFeatureDim, 0);
    casp_head_b = Parameter("casphead.b", 1, 0, false);
    casp_task_ids.clear();
    casp_label_of.clear();
    protos.single = settings.variant == Variant::SinglePrototype;
    protos.beta_sc = settings.beta_s;
    protos.beta_cc = settings.beta_s;
    reset_prototypes();
}

void Model::reset_prototypes() {
    const Vec sc = concept_embedding(ClothState::SC);
    const Vec cc = concept_embedding(ClothState::CC);
    if (protos.single) {
        Vec mixed(sc.size());
        for (std::size_t i = 0; i < sc.size(); ++i) mixed[i] = 0.5 * (sc[i] + cc[i]);
        protos.sc = mixed;
        protos.cc = mixed;
    } else {
        protos.sc = sc;
        protos.cc = cc;
    }
}

Matrix Model::concept_tokens(ClothState s) const {
    Matrix tokens(4, kTokenWidth);
    Rng rng = Rng(seed).stream(std::string("concept/") + (s == ClothState::SC ? "sc" : "cc"));
    for (double& v : tokens.data) v = rng.gaussian(0.0, 1.0);
    return tokens;
}

Vec Model::concept_embedding(ClothState s) const {
    return text.forward(concept_tokens(s));
}

void Model::install_casp_head(const std::vector<int>& identity_ids, const std::string& task_label) {
    casp_task_ids = identity_ids;
    std::sort(casp_task_ids.begin(), casp_task_ids.end());
    casp_label_of.clear();
    for (std::size_t i = 0; i < casp_task_ids.size(); ++i)
        casp_label_of[casp_task_ids[i]] = static_cast<int>(i);
    const int n = static_cast<int>(casp_task_ids.size());
    casp_head_w = Parameter("casphead.w", kFeatureDim, n);
    casp_head_w.init_gaussian(Rng(seed).stream("casphead/" + task_label), 0.01);
    casp_head_b = Parameter("casphead.b", 1, n, false);
}

void Model::begin_task(const Domain& domain) {
    std::vector<int> ids;
    for (const Identity& ident : domain.train_identities) ids.push_back(ident.id);
    id_head.ensure_identities(ids);
    install_casp_head(ids, domain.name);
    if (!settings.share_base_prompts)
        prompts.base.init_gaussian(Rng(seed).stream("prompts/base@" + domain.name), 0.5);
    if (settings.reset_prototypes_per_task) reset_prototypes();
}

Vec Model::encode_visual(const SyntheticSample& sample) const {
    return visual.forward_one(sample.latent);
}

Vec Model::context_for(const Vec& feature) const {
    if (!settings.uses_context())
        return Vec(static_cast<std::size_t>(ContextEncoder::kContextDim), 0.0);
    return ctx.forward(feature);
}

Matrix Model::modulation_for(const Vec& context) const {
    if (settings.uses_fixed_mod()) return prompts.fixed_mod;
    return prompts.modulate(context);
}

Vec Model::casp_embedding(const SyntheticSample& sample) const {
    const Vec f = encode_visual(sample);
    const Vec c = context_for(f);
    const Matrix mod = modulation_for(c);
    return text.forward(prompts.assemble(mod));
}

std::vector<Parameter*> Model::prompt_stage_parameters() {
    std::vector<Parameter*> out = ctx.parameters();
    for (Parameter* p : prompts.parameters()) out.push_back(p);
    out.push_back(&casp_head_w);
    out.push_back(&casp_head_b);
    return out;
}

std::vector<Parameter*> Model::projection_stage_parameters() {
    std::vector<Parameter*> out = visual.parameters();
    if (settings.uses_projection()) {
        for (Parameter* p : state_cls.parameters()) out.push_back(p);
        for (Parameter* p : proj.parameters()) out.push_back(p);
    }
    for (Parameter* p : id_head.parameters()) out.push_back(p);
    return out;
}

std::vector<Parameter*> Model::all_parameters() {
    std::vector<Parameter*> out = visual.parameters();
    for (Parameter* p : ctx.parameters()) out.push_back(p);
    for (Parameter* p : prompts.parameters()) out.push_back(p);
    for (Parameter* p : state_cls.parameters()) out.push_back(p);
    for (Parameter* p : proj.parameters()) out.push_back(p);
    for (Parameter* p : id_head.parameters()) out.push_back(p);
    out.push_back(&casp_head_w);
    out.push_back(&casp_head_b);
    return out;
}

std::vector<const Parameter*> Model::all_parameters() const {
    auto& self = const_cast<Model&>(*this); // parameter set only, no mutation
    std::vector<const Parameter*> out;
    for (Parameter* p : self.all_parameters()) out.push_back(p);
    return out;
}

namespace {

void require_multiple_identities(const std::vector<SyntheticSample>& batch, const char* where) {
    if (batch.size() < 2)
        throw ProtocolError(std::string(where) + ": batch needs at least 2 samples");
    bool multiple = false;
    for (const auto& s : batch)
        if (s.identity != batch.front().identity) multiple = true;
    if (!multiple)
        throw ProtocolError(std::string(where) + ": batch contains fewer than 2 identities");
}

} // namespace

CaspLossReport casp_stage_loss(Model& model, const std::vector<SyntheticSample>& batch, bool with_grad) {
    if (!model.settings.runs_prompt_stage())
        throw ProtocolError("casp_stage_loss: variant '" + std::string(to_string(model.settings.variant)) +
                            "' has no prompt-learning stage");
    require_multiple_identities(batch, "casp_stage_loss");
    const int b = static_cast<int>(batch.size());
    const double tau = model.settings.temperature;

    // Frozen visual side.
    std::vector<Vec> latents;
    for (const auto& s : batch) latents.push_back(s.latent);
    const Matrix features = model.visual.forward(Matrix::from_rows(latents), nullptr);
    Vec fnorms;
    const Matrix fhat = l2_normalize_rows(features, &fnorms);

    // Trainable text side.
    std::vector<ContextEncoder::Cache> ctx_caches(static_cast<std::size_t>(b));
    std::vector<PromptSet::ModCache> mod_caches(static_cast<std::size_t>(b));
    std::vector<TextEncoder::Cache> text_caches(static_cast<std::size_t>(b));
    std::vector<Vec> embeddings(static_cast<std::size_t>(b));
    const bool use_ctx = model.settings.uses_context();
    for (int i = 0; i < b; ++i) {
        const Vec f = features.row(i);
        Vec c;
        if (use_ctx)
            c = model.ctx.forward(f, &ctx_caches[static_cast<std::size_t>(i)]);
        else
            c.assign(static_cast<std::size_t>(ContextEncoder::kContextDim), 0.0);
        const Matrix mod = model.prompts.modulate(c, &mod_caches[static_cast<std::size_t>(i)]);
        embeddings[static_cast<std::size_t>(i)] =
            model.text.forward(model.prompts.assemble(mod), &text_caches[static_cast<std::size_t>(i)]);
    }
    Matrix emb = Matrix::from_rows(embeddings);
    Vec enorms;
    const Matrix ehat = l2_normalize_rows(emb, &enorms);

    // Similarity logits and identity-positive sets.
    Matrix sims(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            double s = 0.0;
            for (int k = 0; k < kFeatureDim; ++k) s += fhat.at(i, k) * ehat.at(j, k);
            sims.at(i, j) = s / tau;
        }
    std::vector<int> poscount(static_cast<std::size_t>(b), 0);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            if (batch[static_cast<std::size_t>(i)].identity == batch[static_cast<std::size_t>(j)].identity)
                poscount[static_cast<std::size_t>(i)]++;

    const Matrix q_rows = softmax_rows(sims);
    const Matrix q_cols_t = softmax_rows(transpose(sims)); // q_cols_t[j][i] = column softmax of sims[:,j]

    double l_i2t = 0.0, l_t2i = 0.0;
    for (int i = 0; i < b; ++i) {
        double li = 0.0, lj = 0.0;
        for (int j = 0; j < b; ++j) {
            if (batch[static_cast<std::size_t>(i)].identity != batch[static_cast<std::size_t>(j)].identity)
                continue;
            li -= std::log(std::max(q_rows.at(i, j), 1e-300));
            lj -= std::log(std::max(q_cols_t.at(i, j), 1e-300)); // query i as a text anchor over column i
        }
        l_i2t += li / poscount[static_cast<std::size_t>(i)];
        l_t2i += lj / poscount[static_cast<std::size_t>(i)];
    }
    l_i2t /= b;
    l_t2i /= b;
    const double alignment = 0.5 * (l_i2t + l_t2i);

    // Text-side identity cross-entropy through the per-task head.
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        const auto it = model.casp_label_of.find(batch[static_cast<std::size_t>(i)].identity);
        if (it == model.casp_label_of.end())
            throw ProtocolError("casp_stage_loss: identity " +
                                std::to_string(batch[static_cast<std::size_t>(i)].identity) +
                                " not covered by the task head");
        labels[static_cast<std::size_t>(i)] = it->second;
    }
    Matrix head_logits = linear(emb, model.casp_head_w, &model.casp_head_b);
    Matrix dlogits;
    const double identity_ce = cross_entropy(head_logits, labels, with_grad ? &dlogits : nullptr);

    CaspLossReport report;
    report.alignment = alignment;
    report.identity = identity_ce;
    report.total = alignment + identity_ce;
    if (!with_grad) return report;

    // d alignment / d sims.
    Matrix dsims(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            const bool pos =
                batch[static_cast<std::size_t>(i)].identity == batch[static_cast<std::size_t>(j)].identity;
            const double row_term =
                q_rows.at(i, j) - (pos ? 1.0 / poscount[static_cast<std::size_t>(i)] : 0.0);
            const double col_term =
                q_cols_t.at(j, i) - (pos ? 1.0 / poscount[static_cast<std::size_t>(j)] : 0.0);
            dsims.at(i, j) = (row_term + col_term) / (2.0 * b);
        }
    // Into normalized embeddings, then through the normalization.
    Matrix dehat(b, kFeatureDim, 0.0);
    for (int j = 0; j < b; ++j)
        for (int i = 0; i < b; ++i) {
            const double g = dsims.at(i, j) / tau;
            if (g == 0.0) continue;
            for (int k = 0; k < kFeatureDim; ++k) dehat.at(j, k) += g * fhat.at(i, k);
        }
    Matrix demb = l2_normalize_backward(ehat, enorms, dehat);
    add_inplace(demb, linear_backward(emb, model.casp_head_w, &model.casp_head_b, dlogits));

    for (int i = 0; i < b; ++i) {
        const Matrix dtokens =
            model.text.backward(text_caches[static_cast<std::size_t>(i)], demb.row(i));
        for (int t = 0; t < PromptSet::kBaseTokens; ++t)
            for (int k = 0; k < kTokenWidth; ++k) model.prompts.base.grad.at(t, k) += dtokens.at(t, k);
        Matrix dmod(PromptSet::kModTokens, kTokenWidth);
        for (int t = 0; t < PromptSet::kModTokens; ++t)
            for (int k = 0; k < kTokenWidth; ++k)
                dmod.at(t, k) = dtokens.at(PromptSet::kBaseTokens + t, k);
        const Vec dcontext =
            model.prompts.modulate_backward(mod_caches[static_cast<std::size_t>(i)], dmod);
        if (use_ctx) model.ctx.backward(ctx_caches[static_cast<std::size_t>(i)], dcontext);
    }
    model.prompts.base.grad_ready = true;
    return report;
}

namespace {

AkfpLossReport akfp_loss_impl(Model& model, const std::vector<SyntheticSample>& batch, bool with_grad,
                              bool include_state_aux) {
    require_multiple_identities(batch, "akfp_stage_loss");
    const int b = static_cast<int>(batch.size());
    const double lambda = model.settings.effective_lambda();
    const double state_w = include_state_aux ? model.settings.effective_state_ce_weight() : 0.0;
    const bool with_projection = model.settings.uses_projection();

    std::vector<Vec> latents;
    std::vector<int> identity_ids;
    std::vector<int> labels;
    std::vector<int> state_labels;
    std::vector<ClothState> states;
    for (const auto& s : batch) {
        latents.push_back(s.latent);
        identity_ids.push_back(s.identity);
        labels.push_back(model.id_head.column_for(s.identity));
        state_labels.push_back(s.state == ClothState::SC ? 0 : 1);
        states.push_back(s.state);
    }

    VisualEncoder::Cache cache;
    const Matrix features = model.visual.forward(Matrix::from_rows(latents), &cache);

    AkfpLossReport report;
    Matrix dfeatures(b, kFeatureDim, 0.0);

    {
        Matrix logits = linear(features, model.id_head.w, &model.id_head.b);
        Matrix dlogits;
        report.l_id = cross_entropy(logits, labels, with_grad ? &dlogits : nullptr);
        if (with_grad)
            add_inplace(dfeatures, linear_backward(features, model.id_head.w, &model.id_head.b, dlogits));
    }
    {
        Matrix dtri;
        report.l_triplet = batch_hard_triplet(features, identity_ids, model.settings.margin,
                                              with_grad ? &dtri : nullptr);
        if (with_grad) add_inplace(dfeatures, dtri);
    }

    if (with_projection) {
        Matrix state_logits = linear(features, model.state_cls.w, &model.state_cls.b);
        const Matrix state_probs = softmax_rows(state_logits);
        Matrix dstate_ce;
        report.l_state = cross_entropy(state_logits, state_labels, with_grad ? &dstate_ce : nullptr);
        int correct = 0;
        for (int i = 0; i < b; ++i) {
            const int pred = state_probs.at(i, 0) >= state_probs.at(i, 1) ? 0 : 1;
            correct += pred == state_labels[static_cast<std::size_t>(i)] ? 1 : 0;
        }
        report.state_accuracy = static_cast<double>(correct) / b;

        const Matrix q_sc = matmul(features, model.proj.sc.value);
        const Matrix q_cc = matmul(features, model.proj.cc.value);
        std::vector<Vec> projected(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            Vec fp(static_cast<std::size_t>(kFeatureDim));
            for (int k = 0; k < kFeatureDim; ++k)
                fp[static_cast<std::size_t>(k)] =
                    state_probs.at(i, 0) * q_sc.at(i, k) + state_probs.at(i, 1) * q_cc.at(i, k);
            projected[static_cast<std::size_t>(i)] = std::move(fp);
        }
        report.l_proj = projection_loss(projected, states, model.protos);

        if (with_grad) {
            Matrix dstate_probs(b, 2, 0.0);
            if (lambda > 0.0) {
                for (int i = 0; i < b; ++i) {
                    Vec dfp(static_cast<std::size_t>(kFeatureDim), 0.0);
                    const Vec& target = model.protos.prototype_for(states[static_cast<std::size_t>(i)]);
                    // L contribution is (1/b)(1 - cos), scaled by lambda.
                    cosine_backward_into(projected[static_cast<std::size_t>(i)], target, -lambda / b, dfp);
                    double d0 = 0.0, d1 = 0.0;
                    for (int k = 0; k < kFeatureDim; ++k) {
                        d0 += dfp[static_cast<std::size_t>(k)] * q_sc.at(i, k);
                        d1 += dfp[static_cast<std::size_t>(k)] * q_cc.at(i, k);
                    }
                    dstate_probs.at(i, 0) += d0;
                    dstate_probs.at(i, 1) += d1;
                    // Head and feature gradients through the weighted projections.
                    const double p0 = state_probs.at(i, 0);
                    const double p1 = state_probs.at(i, 1);
                    for (int r = 0; r < kFeatureDim; ++r) {
                        const double fi = features.at(i, r);
                        double dfeat = 0.0;
                        for (int k = 0; k < kFeatureDim; ++k) {
                            const double g = dfp[static_cast<std::size_t>(k)];
                            model.proj.sc.grad.at(r, k) += fi * p0 * g;
                            model.proj.cc.grad.at(r, k) += fi * p1 * g;
                            dfeat += g * (p0 * model.proj.sc.value.at(r, k) + p1 * model.proj.cc.value.at(r, k));
                        }
                        dfeatures.at(i, r) += dfeat;
                    }
                }
                model.proj.sc.grad_ready = true;
                model.proj.cc.grad_ready = true;
            }
            Matrix dstate_logits = softmax_backward_rows(state_probs, dstate_probs);
            if (state_w > 0.0) add_inplace(dstate_logits, dstate_ce, state_w);
            add_inplace(dfeatures,
                        linear_backward(features, model.state_cls.w, &model.state_cls.b, dstate_logits));
        }
    }

    report.total = report.l_id + report.l_triplet + lambda * report.l_proj;
    report.objective = report.total + state_w * report.l_state;
    if (with_grad) model.visual.backward(cache, dfeatures);
    return report;
}

} // namespace

AkfpLossReport akfp_stage_loss(Model& model, const std::vector<SyntheticSample>& batch, bool with_grad) {
    return akfp_loss_impl(model, batch, with_grad, true);
}

TotalLossReport total_loss(Model& model, const std::vector<SyntheticSample>& batch) {
    const AkfpLossReport r = akfp_loss_impl(model, batch, false, false);
    return {r.l_id, r.l_triplet, r.l_proj, r.total};
}

} // namespace lreid
