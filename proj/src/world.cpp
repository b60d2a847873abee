#include "lreid/world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lreid/errors.hpp"
#include "lreid/textio.hpp"

namespace lreid {

namespace {

// Identity numbering: globally unique, derived from the domain slot.
int train_identity_id(int domain_index, int k) { return domain_index * 1000 + k; }
int eval_identity_id(int domain_index, int k) { return domain_index * 1000 + 500 + k; }

Vec random_unit_vector(Rng rng, int dim) {
    Vec v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
        for (double& x : v) x = rng.gaussian();
        norm = l2_norm(v);
    } while (norm < 1e-8);
    for (double& x : v) x /= norm;
    return v;
}

// Random orthogonal matrix by modified Gram-Schmidt on a Gaussian draw.
Matrix random_rotation(Rng rng, int n) {
    Matrix q(n, n);
    for (int j = 0; j < n; ++j) {
        Vec col(static_cast<std::size_t>(n));
        while (true) {
            for (double& x : col) x = rng.gaussian();
            for (int prev = 0; prev < j; ++prev) {
                double proj = 0.0;
                for (int i = 0; i < n; ++i) proj += col[static_cast<std::size_t>(i)] * q.at(i, prev);
                for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] -= proj * q.at(i, prev);
            }
            const double norm = l2_norm(col);
            if (norm > 1e-8) {
                for (int i = 0; i < n; ++i) q.at(i, j) = col[static_cast<std::size_t>(i)] / norm;
                break;
            }
        }
    }
    return q;
}

struct LatentBuilder {
    const WorldConfig* cfg;
    const Domain* domain;
    Vec state_direction; // unit vector in the noise block

    Vec build(const Vec& core, const Vec& outfit_code, ClothState state, Rng& pose_rng) const {
        const int n = cfg->latent_dim();
        Vec pre(static_cast<std::size_t>(n));
        int at = 0;
        for (double v : core) pre[static_cast<std::size_t>(at++)] = v;
        for (double v : outfit_code) pre[static_cast<std::size_t>(at++)] = v;
        const double sign = state == ClothState::SC ? 1.0 : -1.0;
        for (int i = 0; i < cfg->noise_dim; ++i) {
            pre[static_cast<std::size_t>(at++)] = pose_rng.gaussian(0.0, cfg->pose_sigma) +
                                                  sign * cfg->state_signal * state_direction[static_cast<std::size_t>(i)];
        }
        // latent = rotation * diag(scale) * pre + offset
        Vec scaled_pre(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            scaled_pre[static_cast<std::size_t>(i)] = domain->shift_scale[static_cast<std::size_t>(i)] * pre[static_cast<std::size_t>(i)];
        Vec latent(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = domain->shift_rotation.row_ptr(i);
            for (int j = 0; j < n; ++j) s += row[j] * scaled_pre[static_cast<std::size_t>(j)];
            latent[static_cast<std::size_t>(i)] = s + domain->shift_offset[static_cast<std::size_t>(i)];
        }
        return latent;
    }
};

Identity make_identity(Rng rng, int id, int dim) {
    Identity ident;
    ident.id = id;
    ident.core.resize(static_cast<std::size_t>(dim));
    for (double& v : ident.core) v = rng.gaussian();
    return ident;
}

Outfit make_outfit(Rng rng, int outfit_id, int dim, double sigma) {
    Outfit o;
    o.outfit_id = outfit_id;
    o.code.resize(static_cast<std::size_t>(dim));
    for (double& v : o.code) v = rng.gaussian(0.0, sigma);
    return o;
}

void build_domain(Domain& domain, const WorldConfig& cfg, const Rng& root, const Vec& state_direction) {
    if (domain.state_kind == ClothState::CC && cfg.outfits_per_cc_identity < 2)
        throw ProtocolError("build_world: cloth-changing domain '" + domain.name +
                            "' needs at least 2 outfits per identity to satisfy the protocol");

    const std::string base = "world/" + domain.name;
    domain.shift_rotation = random_rotation(root.stream(base + "/rotation"), cfg.latent_dim());
    {
        Rng srng = root.stream(base + "/scale");
        domain.shift_scale.resize(static_cast<std::size_t>(cfg.latent_dim()));
        for (double& v : domain.shift_scale) v = srng.uniform(cfg.domain_scale_lo, cfg.domain_scale_hi);
        Rng orng = root.stream(base + "/offset");
        domain.shift_offset.resize(static_cast<std::size_t>(cfg.latent_dim()));
        for (double& v : domain.shift_offset) v = orng.gaussian(0.0, cfg.domain_offset_sigma);
    }

    LatentBuilder builder{&cfg, &domain, state_direction};

    const int outfits_per_identity = domain.state_kind == ClothState::SC ? 1 : cfg.outfits_per_cc_identity;

    auto generate = [&](bool train_pool) {
        const int id_count = train_pool ? cfg.train_identities : cfg.eval_identities;
        const int img_count = train_pool ? cfg.train_images_per_identity : cfg.eval_images_per_identity;
        auto& identities = train_pool ? domain.train_identities : domain.eval_identities;
        auto& samples = train_pool ? domain.train_samples : domain.eval_samples;
        const std::string pool = train_pool ? "train" : "eval";
        for (int k = 0; k < id_count; ++k) {
            const int id = train_pool ? train_identity_id(domain.index, k) : eval_identity_id(domain.index, k);
            identities.push_back(
                make_identity(root.stream(base + "/" + pool + "/identity/" + std::to_string(id)), id,
                              cfg.identity_dim));
            const Identity& ident = identities.back();
            std::vector<Outfit> outfits;
            for (int o = 0; o < outfits_per_identity; ++o)
                outfits.push_back(make_outfit(root.stream(base + "/outfit/" + std::to_string(id) + "/" +
                                                          std::to_string(o)),
                                              id * 10 + o, cfg.outfit_dim, cfg.outfit_sigma));
            Rng pick = root.stream(base + "/" + pool + "/outfitpick/" + std::to_string(id));
            for (int img = 0; img < img_count; ++img) {
                int slot = 0;
                if (domain.state_kind == ClothState::CC) {
                    if (train_pool) {
                        slot = static_cast<int>(pick.uniform_int(0, outfits_per_identity));
                    } else {
                        // Eval protocol: queries (first 3 images) wear outfit 0,
                        // gallery images cycle through the remaining outfits, so
                        // no same-identity query/gallery pair shares an outfit.
                        slot = img < 3 ? 0 : 1 + (img - 3) % (outfits_per_identity - 1);
                    }
                }
                Rng pose = root.stream(base + "/" + pool + "/pose/" + std::to_string(id) + "/" +
                                       std::to_string(img));
                SyntheticSample s;
                s.latent = builder.build(ident.core, outfits[static_cast<std::size_t>(slot)].code,
                                         domain.state_kind, pose);
                s.identity = id;
                s.outfit = outfits[static_cast<std::size_t>(slot)].outfit_id;
                s.domain_index = domain.index;
                s.domain = domain.name;
                s.state = domain.state_kind;
                samples.push_back(std::move(s));
            }
        }
    };
    generate(true);
    generate(false);
}

} // namespace

const char* to_string(ClothState s) {
    return s == ClothState::SC ? "SC" : "CC";
}

World build_world(std::uint64_t seed, const WorldConfig& config) {
    World world;
    world.seed = seed;
    world.config = config;
    const Rng root(seed);
    const Vec state_direction = random_unit_vector(root.stream("world/state-signal"), config.noise_dim);

    const std::array<std::pair<const char*, ClothState>, 6> layout = {{
        {"SC1", ClothState::SC},
        {"CC1", ClothState::CC},
        {"SC2", ClothState::SC},
        {"CC2", ClothState::CC},
        {"SCH", ClothState::SC},
        {"CCH", ClothState::CC},
    }};
    for (int i = 0; i < 6; ++i) {
        Domain d;
        d.name = layout[static_cast<std::size_t>(i)].first;
        d.state_kind = layout[static_cast<std::size_t>(i)].second;
        d.index = i;
        build_domain(d, config, root, state_direction);
        if (i < 4)
            world.seen.push_back(std::move(d));
        else
            world.heldout.push_back(std::move(d));
    }
    return world;
}

std::vector<SyntheticSample> sample_pk_batch(const Domain& domain, int num_identities, int images_per_identity,
                                             Rng& rng) {
    const int pool = static_cast<int>(domain.train_identities.size());
    if (num_identities < 2)
        throw ProtocolError("sample_pk_batch: need at least 2 identities per batch, got " +
                            std::to_string(num_identities));
    if (num_identities > pool)
        throw ProtocolError("sample_pk_batch: requested " + std::to_string(num_identities) +
                            " identities but domain '" + domain.name + "' has " + std::to_string(pool));
    const int per_id = static_cast<int>(domain.train_samples.size()) / pool;
    if (images_per_identity < 1 || images_per_identity > per_id)
        throw ProtocolError("sample_pk_batch: images per identity must be in [1, " + std::to_string(per_id) +
                            "]");
    const std::vector<int> chosen = rng.sample_without_replacement(pool, num_identities);
    std::vector<SyntheticSample> batch;
    batch.reserve(static_cast<std::size_t>(num_identities * images_per_identity));
    for (int idx : chosen) {
        const std::vector<int> imgs = rng.sample_without_replacement(per_id, images_per_identity);
        for (int img : imgs)
            batch.push_back(domain.train_samples[static_cast<std::size_t>(idx * per_id + img)]);
    }
    return batch;
}

EvalSplit eval_split(const Domain& domain) {
    if (domain.eval_samples.empty())
        throw ProtocolError("eval_split: domain '" + domain.name + "' has no eval samples");
    EvalSplit split;
    split.cloth_changing_protocol = domain.state_kind == ClothState::CC;
    const int per_id = static_cast<int>(domain.eval_samples.size()) /
                       static_cast<int>(domain.eval_identities.size());
    for (std::size_t i = 0; i < domain.eval_samples.size(); ++i) {
        const int img = static_cast<int>(i) % per_id;
        if (img < 3)
            split.queries.push_back(domain.eval_samples[i]);
        else
            split.gallery.push_back(domain.eval_samples[i]);
    }
    return split;
}

std::vector<LearningOrder> builtin_orders() {
    // Positional substitution over the four seen domains:
    // index 0=SC1, 1=CC1, 2=SC2, 3=CC2.
    return {
        {1, {0, 1, 2, 3}},
        {2, {1, 0, 3, 2}},
        {3, {0, 3, 2, 1}},
        {4, {3, 2, 1, 0}},
        {5, {0, 2, 1, 3}},
        {6, {1, 3, 0, 2}},
    };
}

std::vector<Vec> mixed_analysis_latents(const World& world, int count) {
    std::vector<const SyntheticSample*> sc_pool, cc_pool;
    for (const Domain& d : world.seen) {
        auto& pool = d.state_kind == ClothState::SC ? sc_pool : cc_pool;
        for (const SyntheticSample& s : d.eval_samples) pool.push_back(&s);
    }
    if (sc_pool.empty() || cc_pool.empty())
        throw ProtocolError("mixed_analysis_latents: world lacks SC or CC eval samples");
    Rng rng = Rng(world.seed).stream("world/mixed-analysis");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto* a = sc_pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sc_pool.size())))];
        const auto* b = cc_pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cc_pool.size())))];
        Vec mix(a->latent.size());
        for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = 0.5 * (a->latent[k] + b->latent[k]);
        out.push_back(std::move(mix));
    }
    return out;
}

std::string world_descriptor(const World& world) {
    std::ostringstream os;
    os << "lreid-world v1\n";
    os << "seed " << world.seed << "\n";
    const WorldConfig& c = world.config;
    os << "identity_dim " << c.identity_dim << "\n";
    os << "outfit_dim " << c.outfit_dim << "\n";
    os << "noise_dim " << c.noise_dim << "\n";
    os << "train_identities " << c.train_identities << "\n";
    os << "eval_identities " << c.eval_identities << "\n";
    os << "train_images_per_identity " << c.train_images_per_identity << "\n";
    os << "eval_images_per_identity " << c.eval_images_per_identity << "\n";
    os << "outfits_per_cc_identity " << c.outfits_per_cc_identity << "\n";
    os << "outfit_sigma " << format_double(c.outfit_sigma) << "\n";
    os << "pose_sigma " << format_double(c.pose_sigma) << "\n";
    os << "state_signal " << format_double(c.state_signal) << "\n";
    os << "domain_offset_sigma " << format_double(c.domain_offset_sigma) << "\n";
    os << "domain_scale_lo " << format_double(c.domain_scale_lo) << "\n";
    os << "domain_scale_hi " << format_double(c.domain_scale_hi) << "\n";
    os << "domains";
    for (const Domain& d : world.seen) os << " " << d.name << ":" << to_string(d.state_kind);
    os << "\n";
    os << "heldout";
    for (const Domain& d : world.heldout) os << " " << d.name << ":" << to_string(d.state_kind);
    os << "\n";
    return os.str();
}

World world_from_descriptor(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "lreid-world v1")
        throw ProtocolError("world_from_descriptor: unsupported descriptor header '" + line + "'");
    std::uint64_t seed = 0;
    WorldConfig cfg;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
        if (key == "seed") seed = std::stoull(rest);
        else if (key == "identity_dim") cfg.identity_dim = std::stoi(rest);
        else if (key == "outfit_dim") cfg.outfit_dim = std::stoi(rest);
        else if (key == "noise_dim") cfg.noise_dim = std::stoi(rest);
        else if (key == "train_identities") cfg.train_identities = std::stoi(rest);
        else if (key == "eval_identities") cfg.eval_identities = std::stoi(rest);
        else if (key == "train_images_per_identity") cfg.train_images_per_identity = std::stoi(rest);
        else if (key == "eval_images_per_identity") cfg.eval_images_per_identity = std::stoi(rest);
        else if (key == "outfits_per_cc_identity") cfg.outfits_per_cc_identity = std::stoi(rest);
        else if (key == "outfit_sigma") cfg.outfit_sigma = parse_double(rest);
        else if (key == "pose_sigma") cfg.pose_sigma = parse_double(rest);
        else if (key == "state_signal") cfg.state_signal = parse_double(rest);
        else if (key == "domain_offset_sigma") cfg.domain_offset_sigma = parse_double(rest);
        else if (key == "domain_scale_lo") cfg.domain_scale_lo = parse_double(rest);
        else if (key == "domain_scale_hi") cfg.domain_scale_hi = parse_double(rest);
        else if (key == "domains" || key == "heldout") { /* metadata echo */ }
        else throw ProtocolError("world_from_descriptor: unknown key '" + key + "'");
    }
    return build_world(seed, cfg);
}

} // namespace lreid
