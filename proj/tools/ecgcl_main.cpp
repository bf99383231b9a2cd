// Command-line front end: dataset generation/ingest, the two training
// stages, evaluation, parameter sweeps and sweep summaries.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecgcl/ecgcl.hpp"

namespace fs = std::filesystem;
using namespace ecgcl;

namespace {

std::vector<EcgRecord> load_records(const ExperimentConfig& cfg) {
    if (!cfg.data_path.empty()) return io::load_record_set(cfg.data_path);
    if (cfg.source == DataSource::Synthetic) return generate_synthetic(cfg.synthetic);
    throw Error("config: [data] path is required for a ptbxl source (run ingest first)");
}

Dataset load_dataset(const ExperimentConfig& cfg) { return make_dataset(load_records(cfg)); }

void load_component(ModelState& state, const std::string& path,
                    const std::vector<std::string>& components) {
    ParamStore params, buffers;
    io::split_checkpoint_tensors(io::load_checkpoint(path), params, buffers);
    for (const std::string& comp : components) {
        bool found = false;
        for (const auto& [name, tensor] : params) {
            if (component_of(name) != comp) continue;
            auto it = state.params.find(name);
            if (it == state.params.end())
                throw Error("checkpoint entry '" + name + "' does not match the configured model");
            if (!it->second.same_shape(tensor))
                throw Error("checkpoint entry '" + name + "' has shape " +
                            shape_str(tensor.shape()) + ", model expects " +
                            shape_str(it->second.shape()));
            it->second = tensor;
            found = true;
        }
        for (const auto& [name, tensor] : buffers) {
            if (component_of(name) != comp) continue;
            auto it = state.buffers.find(name);
            if (it == state.buffers.end() || !it->second.same_shape(tensor))
                throw Error("checkpoint buffer '" + name + "' does not match the configured model");
            it->second = tensor;
        }
        if (!found) throw Error("checkpoint '" + path + "' has no '" + comp + "' parameters");
    }
}

std::map<std::string, Tensor> component_tensors(const ModelState& state,
                                                const std::vector<std::string>& components) {
    ParamStore params, buffers;
    for (const std::string& comp : components) {
        for (const auto& [name, tensor] : state.params)
            if (component_of(name) == comp) params[name] = tensor;
        for (const auto& [name, tensor] : state.buffers)
            if (component_of(name) == comp) buffers[name] = tensor;
    }
    return io::checkpoint_tensors(params, buffers);
}

int cmd_synth_data(const std::string& config_path, const std::string& out,
                   uint64_t seed_override, bool has_seed) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (has_seed) cfg.synthetic.seed = seed_override;
    const std::vector<EcgRecord> records = generate_synthetic(cfg.synthetic);
    io::save_record_set(out, records);
    std::cout << "wrote " << records.size() << " records to " << out << "\n";
    return 0;
}

int cmd_ingest(const std::string& root, const std::string& out) {
    const fs::path meta = fs::path(root) / "ptbxl_database.csv";
    std::ifstream meta_in(meta);
    if (!meta_in) throw Error("cannot open metadata csv '" + meta.string() + "'");
    const std::vector<wfdb::PtbxlMetadataRow> rows = wfdb::parse_metadata_csv(meta_in);

    std::vector<EcgRecord> records;
    records.reserve(rows.size());
    size_t skipped = 0;
    for (const wfdb::PtbxlMetadataRow& row : rows) {
        const fs::path header_path = fs::path(root) / (row.filename_lr + ".hea");
        const fs::path signal_path = fs::path(root) / (row.filename_lr + ".dat");
        try {
            std::ifstream hin(header_path);
            if (!hin) throw Error("missing header " + header_path.string());
            std::stringstream hbuf;
            hbuf << hin.rdbuf();
            const wfdb::WfdbHeader header = wfdb::parse_header(hbuf.str());

            std::ifstream sin(signal_path, std::ios::binary);
            if (!sin) throw Error("missing signal file " + signal_path.string());
            std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(sin)),
                                       std::istreambuf_iterator<char>());
            EcgRecord rec = wfdb::read_signal(header, bytes);
            rec.record_id = std::to_string(row.ecg_id);
            rec.fold = row.strat_fold;
            rec.labels = wfdb::map_scp_to_superclass(row.scp_codes);
            records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            std::cerr << "skipping ecg_id " << row.ecg_id << ": " << e.what() << "\n";
            ++skipped;
        }
    }
    if (records.empty()) throw Error("ingest produced no records");
    io::save_record_set(out, records);
    std::cout << "ingested " << records.size() << " records (" << skipped << " skipped) to " << out
              << "\n";
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out, uint64_t seed,
                 const std::string& log_path) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    Dataset ds = load_dataset(cfg);
    ModelState state = build_model(cfg.encoder, cfg.head, seed);
    MetricsLog log(log_path);
    const std::vector<double> losses =
        pretrain(state, ds.pretrain_pool(), cfg.augmentation, cfg.train, seed, &log);
    io::save_checkpoint(out, component_tensors(state, {"encoder", "projection"}));
    std::cout << "pretrained " << cfg.train.pretrain_epochs << " epochs, final loss "
              << losses.back() << ", checkpoint " << out << "\n";
    return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& encoder_ckpt,
                 const std::string& out, int fraction, uint64_t seed,
                 const std::string& log_path) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    Dataset ds = load_dataset(cfg);
    ModelState state = build_model(cfg.encoder, cfg.head, seed);
    load_component(state, encoder_ckpt, {"encoder"});

    const std::vector<std::string> ids =
        select_label_fraction(ds.split, LabelFraction::of(fraction), seed);
    const std::vector<const EcgRecord*> labelled = ds.labelled(ids);
    if (labelled.empty()) throw Error("label fraction selected no labelled records");

    MetricsLog log(log_path);
    finetune(state, labelled, cfg.train, seed, &log);
    io::save_checkpoint(out, component_tensors(state, {"classifier"}));
    std::cout << "finetuned on " << labelled.size() << " records ("
              << LabelFraction::of(fraction).percent_label() << " labels), checkpoint " << out
              << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& encoder_ckpt,
                 const std::string& classifier_ckpt, uint64_t seed) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    Dataset ds = load_dataset(cfg);
    ModelState state = build_model(cfg.encoder, cfg.head, seed);
    load_component(state, encoder_ckpt, {"encoder"});
    if (!classifier_ckpt.empty()) load_component(state, classifier_ckpt, {"classifier"});

    const EvalResult res = evaluate(state, ds.test_set());
    std::printf("weighted_accuracy %.6f\n", res.weighted_accuracy);
    std::printf("macro_accuracy %.6f\n", res.macro_accuracy);
    for (int j = 0; j < kNumSuperclasses; ++j)
        std::printf("class %-5s accuracy %.6f support %d\n", kSuperclassNames[(size_t)j],
                    res.per_class[(size_t)j], res.support[(size_t)j]);
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, bool deterministic,
              int workers, bool has_seed, uint64_t seed) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (has_seed) cfg.seeds = {seed};
    Dataset ds = load_dataset(cfg);
    SweepOptions opt;
    opt.deterministic = deterministic;
    opt.workers = workers;
    const std::string csv = run_sweep(cfg, ds, out_dir, opt);
    std::cout << "sweep results in " << csv << "\n";
    return 0;
}

int cmd_summarize(const std::string& target) {
    std::string csv = target;
    if (fs::is_directory(target)) csv = (fs::path(target) / "results.csv").string();
    const std::vector<SweepResult> rows = read_sweep_csv(csv);
    const std::vector<SummaryRow> summary = best_per_augmentation(rows);
    if (summary.empty()) throw Error("no successful rows to summarize");

    std::printf("%-16s %-8s %-9s %-10s %-10s %s\n", "augmentation", "encoder", "labels",
                "best_acc", "at_param", "reference(A/B)");
    for (const SummaryRow& s : summary) {
        const auto& refs = reference_best_accuracies();
        auto it = refs.find(s.kind + "|" + s.label_fraction);
        char ref[40] = "--";
        if (it != refs.end())
            std::snprintf(ref, sizeof ref, "%.2f/%.2f", it->second.first, it->second.second);
        std::printf("%-16s %-8c %-9s %-10.4f %-10s %s\n", s.kind.c_str(), s.encoder,
                    s.label_fraction.c_str(), s.best_weighted, s.best_param.c_str(), ref);
    }
    std::printf("reference supervised accuracy: A %.3f, B %.3f (corpus scale)\n",
                kReferenceSupervisedEncoderA, kReferenceSupervisedEncoderB);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrastive ECG representation learning"};
    app.require_subcommand(1);

    std::string config_path, out, log_path, encoder_ckpt, classifier_ckpt, root, target;
    uint64_t seed = 1;
    bool deterministic = false;
    int workers = 1;
    int fraction = 9;

    CLI::App* synth = app.add_subcommand("synth-data", "generate a synthetic record set");
    synth->add_option("--config", config_path, "experiment config file")->required();
    synth->add_option("--out", out, "output record-set path")->required();
    CLI::Option* synth_seed = synth->add_option("--seed", seed, "generator seed");

    CLI::App* ingest = app.add_subcommand("ingest", "convert a PTB-XL tree to a record set");
    ingest->add_option("--root", root, "corpus root (contains ptbxl_database.csv)")->required();
    ingest->add_option("--out", out, "output record-set path")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "contrastive pretraining");
    pre->add_option("--config", config_path)->required();
    pre->add_option("--out", out, "encoder checkpoint path")->required();
    pre->add_option("--seed", seed);
    pre->add_option("--log", log_path, "metrics log file");
    pre->add_flag("--deterministic", deterministic);

    CLI::App* fin = app.add_subcommand("finetune", "frozen-encoder classifier training");
    fin->add_option("--config", config_path)->required();
    fin->add_option("--encoder", encoder_ckpt, "pretrained encoder checkpoint")->required();
    fin->add_option("--out", out, "classifier checkpoint path")->required();
    fin->add_option("--fraction", fraction, "label fraction numerator (1, 4 or 9)");
    fin->add_option("--seed", seed);
    fin->add_option("--log", log_path);
    fin->add_flag("--deterministic", deterministic);

    CLI::App* eval = app.add_subcommand("evaluate", "weighted accuracy on the test fold");
    eval->add_option("--config", config_path)->required();
    eval->add_option("--encoder", encoder_ckpt)->required();
    eval->add_option("--classifier", classifier_ckpt,
                     "classifier checkpoint (untrained head when omitted)");
    eval->add_option("--seed", seed);

    CLI::App* swp = app.add_subcommand("sweep", "augmentation parameter sweep");
    swp->add_option("--config", config_path)->required();
    swp->add_option("--out", out, "output directory")->required();
    CLI::Option* swp_seed = swp->add_option("--seed", seed, "override the config seed list");
    swp->add_flag("--deterministic", deterministic, "single ordered worker");
    swp->add_option("--workers", workers, "parallel grid points (capped by ECGCL_WORKERS)");

    CLI::App* summ = app.add_subcommand("summarize", "best accuracy per augmentation");
    summ->add_option("target", target, "sweep directory or results csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth_data(config_path, out, seed, !synth_seed->empty());
        if (ingest->parsed()) return cmd_ingest(root, out);
        if (pre->parsed()) return cmd_pretrain(config_path, out, seed, log_path);
        if (fin->parsed())
            return cmd_finetune(config_path, encoder_ckpt, out, fraction, seed, log_path);
        if (eval->parsed()) return cmd_evaluate(config_path, encoder_ckpt, classifier_ckpt, seed);
        if (swp->parsed())
            return cmd_sweep(config_path, out, deterministic, workers, !swp_seed->empty(), seed);
        if (summ->parsed()) return cmd_summarize(target);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
