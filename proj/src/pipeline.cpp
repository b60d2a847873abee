#include "lreid/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "lreid/errors.hpp"
#include "lreid/optim.hpp"
#include "lreid/textio.hpp"

namespace lreid {

namespace {

int batches_per_epoch(const Domain& domain, const ExperimentConfig& cfg) {
    const int batch = cfg.batch_p * cfg.batch_k;
    return std::max(1, static_cast<int>(domain.train_samples.size()) / batch);
}

std::string batch_label(const ExperimentConfig& cfg, const char* stage, int task, int cycle, int epoch,
                        int batch) {
    return cfg.order_label() + "/task" + std::to_string(task) + "/cycle" + std::to_string(cycle) + "/" +
           stage + "/epoch" + std::to_string(epoch) + "/batch" + std::to_string(batch);
}

void check_finite(double loss, const std::string& label) {
    if (!std::isfinite(loss))
        throw DivergenceError("training diverged (non-finite loss) at " + label);
}

} // namespace

std::vector<CaspEpochLog> casp_train_stage(Model& model, const Domain& domain, const ExperimentConfig& config,
                                           int epochs, int task_index, int cycle) {
    std::vector<CaspEpochLog> logs;
    if (epochs <= 0) return logs;
    Schedule schedule{ScheduleKind::CosineDecay, epochs, 0, config.casp_lr, config.casp_lr * 0.02};
    OptimizerState opt;
    opt.base_lr = config.casp_lr;
    opt.weight_decay = config.weight_decay;
    auto params = model.prompt_stage_parameters();
    const int batches = batches_per_epoch(domain, config);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr = schedule_rate(schedule, epoch);
        CaspEpochLog log;
        log.task = task_index;
        log.epoch = epoch;
        log.lr = lr;
        for (int bi = 0; bi < batches; ++bi) {
            const std::string label = batch_label(config, "casp", task_index, cycle, epoch, bi);
            Rng rng = Rng(config.seed).stream(label);
            const auto batch = sample_pk_batch(domain, config.batch_p, config.batch_k, rng);
            for (Parameter* p : params) p->zero_grad();
            const CaspLossReport r = casp_stage_loss(model, batch, true);
            check_finite(r.total, label);
            adam_step(params, opt, lr);
            log.alignment += r.alignment;
            log.identity += r.identity;
            log.total += r.total;
        }
        log.alignment /= batches;
        log.identity /= batches;
        log.total /= batches;
        logs.push_back(log);
    }
    return logs;
}

std::vector<AkfpEpochLog> akfp_train_stage(Model& model, const Domain& domain, const ExperimentConfig& config,
                                           int epochs, int task_index, int cycle) {
    std::vector<AkfpEpochLog> logs;
    if (epochs <= 0) return logs;
    const int warmup = epochs >= 2 ? std::max(1, epochs / 6) : 0;
    Schedule schedule{ScheduleKind::WarmupThenDecay, epochs, warmup, config.akfp_lr, config.akfp_lr * 0.02};
    OptimizerState opt;
    opt.base_lr = config.akfp_lr;
    opt.weight_decay = config.weight_decay;
    auto params = model.projection_stage_parameters();
    const int batches = batches_per_epoch(domain, config);
    const bool with_projection = model.settings.uses_projection();

    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr = schedule_rate(schedule, epoch);
        AkfpEpochLog log;
        log.task = task_index;
        log.epoch = epoch;
        log.lr = lr;
        for (int bi = 0; bi < batches; ++bi) {
            const std::string label = batch_label(config, "akfp", task_index, cycle, epoch, bi);
            Rng rng = Rng(config.seed).stream(label);
            const auto batch = sample_pk_batch(domain, config.batch_p, config.batch_k, rng);

            if (with_projection) {
                // Slow prototypes advance once per batch from the current
                // prompt embeddings (inference path; no gradient).
                std::vector<Vec> embeddings;
                std::vector<ClothState> states;
                embeddings.reserve(batch.size());
                for (const auto& s : batch) {
                    embeddings.push_back(model.casp_embedding(s));
                    states.push_back(s.state);
                }
                update_prototypes(model.protos, embeddings, states);
            }

            for (Parameter* p : params) p->zero_grad();
            const AkfpLossReport r = akfp_stage_loss(model, batch, true);
            check_finite(r.objective, label);
            adam_step(params, opt, lr);
            log.l_id += r.l_id;
            log.l_triplet += r.l_triplet;
            log.l_proj += r.l_proj;
            log.l_total += r.total;
            log.state_acc += r.state_accuracy;
        }
        log.l_id /= batches;
        log.l_triplet /= batches;
        log.l_proj /= batches;
        log.l_total /= batches;
        log.state_acc /= batches;
        logs.push_back(log);
    }
    return logs;
}

TaskReport run_task(Model& model, const Domain& domain, const ExperimentConfig& config, int task_index) {
    model.begin_task(domain);
    TaskReport report;
    report.domain = domain.name;
    const int casp_total = config.casp_epochs();
    const int akfp_total = config.akfp_epochs();
    for (int cycle = 0; cycle < config.cycles; ++cycle) {
        // Cycles divide each stage's epoch budget so alternation depth does
        // not change the total optimization work.
        const int casp_epochs = casp_total > 0 ? std::max(1, casp_total / config.cycles) : 0;
        const int akfp_epochs = akfp_total > 0 ? std::max(1, akfp_total / config.cycles) : 0;
        if (model.settings.runs_prompt_stage()) {
            auto logs = casp_train_stage(model, domain, config, casp_epochs, task_index, cycle);
            for (auto& l : logs) {
                l.epoch += cycle * casp_epochs;
                report.casp_epochs.push_back(l);
            }
        }
        auto logs = akfp_train_stage(model, domain, config, akfp_epochs, task_index, cycle);
        for (auto& l : logs) {
            l.epoch += cycle * akfp_epochs;
            report.akfp_epochs.push_back(l);
        }
    }
    return report;
}

SequenceResult run_sequence(const ExperimentConfig& config, const World* prebuilt_world) {
    World local_world;
    const World* world = prebuilt_world;
    if (!world) {
        local_world = build_world(config.seed);
        world = &local_world;
    }

    std::vector<int> task_domains;
    if (!config.sequence.empty()) {
        for (const auto& name : config.sequence) {
            int found = -1;
            for (const auto& d : world->seen)
                if (d.name == name) found = d.index;
            if (found < 0)
                throw ConfigError("sequence names unknown domain '" + name + "'");
            task_domains.push_back(found);
        }
    } else {
        const auto orders = builtin_orders();
        for (int idx : orders[static_cast<std::size_t>(config.order - 1)].domain_indices)
            task_domains.push_back(idx);
    }

    SequenceResult result;
    result.model.init(config.seed, world->config.latent_dim(), config.model_settings());
    for (int idx : task_domains) {
        result.matrix.domain_names.push_back(world->seen[static_cast<std::size_t>(idx)].name);
        result.matrix.domain_states.push_back(world->seen[static_cast<std::size_t>(idx)].state_kind);
    }

    const FeatureFn encoder = [&](const SyntheticSample& s) { return result.model.encode_visual(s); };
    for (std::size_t t = 0; t < task_domains.size(); ++t) {
        const Domain& domain = world->seen[static_cast<std::size_t>(task_domains[t])];
        result.tasks.push_back(run_task(result.model, domain, config, static_cast<int>(t)));
        std::vector<MatrixCell> row(task_domains.size());
        for (std::size_t j = 0; j <= t; ++j) {
            const Domain& eval_domain = world->seen[static_cast<std::size_t>(task_domains[j])];
            row[j].filled = true;
            row[j].metrics = map_and_rank1(eval_split(eval_domain), encoder);
        }
        result.matrix.cells.push_back(std::move(row));
    }

    if (config.eval_heldout) {
        for (const Domain& d : world->heldout)
            result.heldout.emplace_back(d.name, map_and_rank1(eval_split(d), encoder));
    }
    result.analysis = mechanism_analyses(result.model, *world);
    return result;
}

std::string casp_log_csv(const std::vector<CaspEpochLog>& logs) {
    std::ostringstream os;
    os << "epoch,alignment,identity,total,lr\n";
    for (const auto& l : logs)
        os << l.epoch << "," << format_metric(l.alignment) << "," << format_metric(l.identity) << ","
           << format_metric(l.total) << "," << format_double(l.lr) << "\n";
    return os.str();
}

std::string akfp_log_csv(const std::vector<AkfpEpochLog>& logs) {
    std::ostringstream os;
    os << "epoch,L_id,L_triplet,L_proj,L_total,state_acc,lr\n";
    for (const auto& l : logs)
        os << l.epoch << "," << format_metric(l.l_id) << "," << format_metric(l.l_triplet) << ","
           << format_metric(l.l_proj) << "," << format_metric(l.l_total) << ","
           << format_metric(l.state_acc) << "," << format_double(l.lr) << "\n";
    return os.str();
}

namespace {

constexpr const char* kCheckpointHeader = "lreid-checkpoint v1";

void write_vec(std::ostream& os, const Vec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << format_double(v[i]);
    os << "\n";
}

Vec read_vec(std::istream& is, std::size_t n, const char* what) {
    Vec v(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> tok)) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
        v[i] = parse_double(tok);
    }
    return v;
}

} // namespace

void save_checkpoint(const Model& model, const ExperimentConfig& config,
                     const std::vector<TaskReport>& task_logs, const std::string& path) {
    std::ostringstream os;
    os << kCheckpointHeader << "\n";
    os << "config-begin\n" << config.canonical_echo() << "config-end\n";
    os << "latent_dim " << model.latent_dim << "\n";

    os << "idhead-columns " << model.id_head.ids_by_column.size() << "\n";
    for (std::size_t i = 0; i < model.id_head.ids_by_column.size(); ++i)
        os << (i ? " " : "") << model.id_head.ids_by_column[i];
    os << "\n";
    os << "casp-task-ids " << model.casp_task_ids.size() << "\n";
    for (std::size_t i = 0; i < model.casp_task_ids.size(); ++i)
        os << (i ? " " : "") << model.casp_task_ids[i];
    os << "\n";

    for (const Parameter* p : model.all_parameters()) {
        os << "param " << p->name << " " << p->value.rows << " " << p->value.cols << " "
           << (p->decay ? 1 : 0) << "\n";
        for (int i = 0; i < p->value.rows; ++i) {
            for (int j = 0; j < p->value.cols; ++j) os << (j ? " " : "") << format_double(p->value.at(i, j));
            os << "\n";
        }
    }

    os << "proto-single " << (model.protos.single ? 1 : 0) << "\n";
    os << "proto-beta " << format_double(model.protos.beta_sc) << " " << format_double(model.protos.beta_cc)
       << "\n";
    os << "proto-sc " << model.protos.sc.size() << "\n";
    write_vec(os, model.protos.sc);
    os << "proto-cc " << model.protos.cc.size() << "\n";
    write_vec(os, model.protos.cc);

    for (const auto& task : task_logs) {
        os << "task " << task.domain << "\n";
        for (const auto& l : task.casp_epochs)
            os << "log-casp " << l.task << " " << l.epoch << " " << format_double(l.alignment) << " "
               << format_double(l.identity) << " " << format_double(l.total) << " " << format_double(l.lr)
               << "\n";
        for (const auto& l : task.akfp_epochs)
            os << "log-akfp " << l.task << " " << l.epoch << " " << format_double(l.l_id) << " "
               << format_double(l.l_triplet) << " " << format_double(l.l_proj) << " "
               << format_double(l.l_total) << " " << format_double(l.state_acc) << " "
               << format_double(l.lr) << "\n";
    }
    os << "end\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out << os.str();
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw CheckpointError("checkpoint is empty: '" + path + "'");
    if (line != kCheckpointHeader)
        throw CheckpointError("unsupported checkpoint header '" + line + "' (this build reads '" +
                              std::string(kCheckpointHeader) + "')");

    if (!std::getline(in, line) || line != "config-begin")
        throw CheckpointError("checkpoint missing config block");
    std::string config_text;
    while (std::getline(in, line) && line != "config-end") config_text += line + "\n";
    if (line != "config-end") throw CheckpointError("checkpoint truncated inside config block");

    LoadedCheckpoint loaded;
    loaded.config = parse_config_text(config_text);

    int latent_dim = 0;
    std::vector<int> idhead_ids, casp_ids;
    std::map<std::string, Matrix> param_values;
    bool saw_end = false;
    StatePrototypes protos;
    std::map<std::string, TaskReport*> task_by_name;
    std::vector<std::string> task_order;

    std::string key;
    while (in >> key) {
        if (key == "latent_dim") {
            in >> latent_dim;
        } else if (key == "idhead-columns") {
            std::size_t n = 0;
            in >> n;
            idhead_ids.resize(n);
            for (auto& id : idhead_ids)
                if (!(in >> id)) throw CheckpointError("checkpoint truncated in idhead-columns");
        } else if (key == "casp-task-ids") {
            std::size_t n = 0;
            in >> n;
            casp_ids.resize(n);
            for (auto& id : casp_ids)
                if (!(in >> id)) throw CheckpointError("checkpoint truncated in casp-task-ids");
        } else if (key == "param") {
            std::string name;
            int rows = 0, cols = 0, decay = 0;
            if (!(in >> name >> rows >> cols >> decay))
                throw CheckpointError("checkpoint truncated in param header");
            Matrix m(rows, cols);
            std::string tok;
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    if (!(in >> tok))
                        throw CheckpointError("checkpoint truncated while reading param '" + name + "'");
                    m.at(i, j) = parse_double(tok);
                }
            param_values[name] = std::move(m);
        } else if (key == "proto-single") {
            int s = 0;
            in >> s;
            protos.single = s != 0;
        } else if (key == "proto-beta") {
            std::string a, b;
            if (!(in >> a >> b)) throw CheckpointError("checkpoint truncated in proto-beta");
            protos.beta_sc = parse_double(a);
            protos.beta_cc = parse_double(b);
        } else if (key == "proto-sc") {
            std::size_t n = 0;
            in >> n;
            protos.sc = read_vec(in, n, "proto-sc");
        } else if (key == "proto-cc") {
            std::size_t n = 0;
            in >> n;
            protos.cc = read_vec(in, n, "proto-cc");
        } else if (key == "task") {
            std::string name;
            in >> name;
            loaded.task_logs.push_back(TaskReport{name, {}, {}});
        } else if (key == "log-casp") {
            if (loaded.task_logs.empty()) throw CheckpointError("checkpoint log before any task record");
            CaspEpochLog l;
            std::string a, b, c, d;
            if (!(in >> l.task >> l.epoch >> a >> b >> c >> d))
                throw CheckpointError("checkpoint truncated in log-casp");
            l.alignment = parse_double(a);
            l.identity = parse_double(b);
            l.total = parse_double(c);
            l.lr = parse_double(d);
            loaded.task_logs.back().casp_epochs.push_back(l);
        } else if (key == "log-akfp") {
            if (loaded.task_logs.empty()) throw CheckpointError("checkpoint log before any task record");
            AkfpEpochLog l;
            std::string a, b, c, d, e, f;
            if (!(in >> l.task >> l.epoch >> a >> b >> c >> d >> e >> f))
                throw CheckpointError("checkpoint truncated in log-akfp");
            l.l_id = parse_double(a);
            l.l_triplet = parse_double(b);
            l.l_proj = parse_double(c);
            l.l_total = parse_double(d);
            l.state_acc = parse_double(e);
            l.lr = parse_double(f);
            loaded.task_logs.back().akfp_epochs.push_back(l);
        } else if (key == "end") {
            saw_end = true;
            break;
        } else {
            throw CheckpointError("unknown checkpoint record '" + key + "'");
        }
    }
    if (!saw_end) throw CheckpointError("checkpoint truncated: missing end marker");
    if (latent_dim <= 0) throw CheckpointError("checkpoint missing latent_dim");

    loaded.model.init(loaded.config.seed, latent_dim, loaded.config.model_settings());
    loaded.model.id_head.restore_columns(idhead_ids);
    if (!casp_ids.empty()) loaded.model.install_casp_head(casp_ids, "restored");
    loaded.model.protos = protos;

    for (Parameter* p : loaded.model.all_parameters()) {
        const auto it = param_values.find(p->name);
        if (it == param_values.end())
            throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
        if (!it->second.same_shape(p->value))
            throw CheckpointError("checkpoint parameter '" + p->name + "' has shape " +
                                  it->second.shape_str() + ", expected " + p->value.shape_str());
        p->value = it->second;
        param_values.erase(it);
    }
    if (!param_values.empty())
        throw CheckpointError("checkpoint holds unknown parameter '" + param_values.begin()->first + "'");
    return loaded;
}

} // namespace lreid
