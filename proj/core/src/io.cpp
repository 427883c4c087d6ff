#include "gil/io.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gil/errors.hpp"
#include "gil/rng.hpp"

namespace gil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed JSON in " + what);
    return j;
}

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw ParseError("unexpected key '" + it.key() + "' in " + where);
    }
}

std::vector<std::int64_t> int_list(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError(where + " must be an array");
    std::vector<std::int64_t> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number_integer()) throw ParseError(where + " must hold integers");
        out.push_back(v.get<std::int64_t>());
    }
    return out;
}

json sample_to_json(const ExpressionSample& s) {
    json j;
    j["id"] = s.id;
    j["genes"] = s.gene_indices;
    j["values"] = s.values;
    if (s.label.has_value()) j["label"] = *s.label;
    return j;
}

ExpressionSample sample_from_json(const json& j, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no);
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    require_keys(j, {"id", "genes", "values", "label"}, where);
    if (!j.contains("id") || !j.contains("genes") || !j.contains("values"))
        throw ParseError(where + ": id, genes and values are required");
    ExpressionSample s;
    s.id = j.at("id").get<std::int64_t>();
    s.gene_indices = int_list(j.at("genes"), where + " genes");
    const auto& vals = j.at("values");
    if (!vals.is_array()) throw ParseError(where + ": values must be an array");
    for (const auto& v : vals) {
        if (!v.is_number()) throw ParseError(where + ": values must be numbers");
        s.values.push_back(v.get<double>());
    }
    if (j.contains("label")) s.label = j.at("label").get<int>();
    return s;
}

// little-endian float payload; byte-swapped on big-endian hosts
void append_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    if constexpr (std::endian::native == std::endian::big) {
        bits = ((bits & 0xff000000u) >> 24) | ((bits & 0x00ff0000u) >> 8) |
               ((bits & 0x0000ff00u) << 8) | ((bits & 0x000000ffu) << 24);
    }
    char b[4];
    std::memcpy(b, &bits, 4);
    out.append(b, 4);
}

float read_f32(const char* p) {
    std::uint32_t bits;
    std::memcpy(&bits, p, 4);
    if constexpr (std::endian::native == std::endian::big) {
        bits = ((bits & 0xff000000u) >> 24) | ((bits & 0x00ff0000u) >> 8) |
               ((bits & 0x0000ff00u) << 8) | ((bits & 0x000000ffu) << 24);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

ModelParams allocate_params(const ModelConfig& config) {
    ModelParams p;
    p.config = config;
    const auto d = config.d_model;
    p.embedding = Tensor(config.vocab_size, d);
    p.value_encoder = Tensor(1, d);
    p.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : p.layers) {
        layer.ln1_gain = Tensor(1, d);
        layer.ln1_bias = Tensor(1, d);
        layer.wq = Tensor(d, d);
        layer.wk = Tensor(d, d);
        layer.wv = Tensor(d, d);
        layer.wo = Tensor(d, d);
        layer.ln2_gain = Tensor(1, d);
        layer.ln2_bias = Tensor(1, d);
        layer.w1 = Tensor(d, config.d_ff);
        layer.b1 = Tensor(1, config.d_ff);
        layer.w2 = Tensor(config.d_ff, d);
        layer.b2 = Tensor(1, d);
    }
    p.final_gain = Tensor(1, d);
    p.final_bias = Tensor(1, d);
    p.value_head = Tensor(d, 1);
    return p;
}

}  // namespace

void save_expression_jsonl(const fs::path& path, std::span<const ExpressionSample> samples) {
    std::string out;
    for (const auto& s : samples) {
        out += sample_to_json(s).dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

std::vector<ExpressionSample> load_expression_jsonl(const fs::path& path,
                                                    std::int64_t vocab_size) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<ExpressionSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON");
        ExpressionSample s = sample_from_json(j, line_no);
        s.validate(vocab_size);
        out.push_back(std::move(s));
    }
    return out;
}

LabeledDataset load_labeled_jsonl(const fs::path& path, std::int64_t vocab_size) {
    LabeledDataset ds;
    ds.name = path.stem().string();
    ds.samples = load_expression_jsonl(path, vocab_size);
    int max_label = -1;
    for (const auto& s : ds.samples) {
        if (!s.label.has_value())
            throw DataError("dataset " + ds.name + ": sample " + std::to_string(s.id) +
                            " has no label");
        max_label = std::max(max_label, *s.label);
    }
    ds.n_classes = max_label + 1;
    ds.validate(vocab_size);
    return ds;
}

void save_vocabulary(const fs::path& path, const GeneVocabulary& vocab) {
    std::string out;
    for (const auto& s : vocab.symbols) {
        out += s;
        out += '\n';
    }
    atomic_write_file(path, out);
}

GeneVocabulary load_vocabulary(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::string> symbols;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) throw ParseError(path.string() + ": empty vocabulary line");
        symbols.push_back(line);
    }
    return GeneVocabulary::from_symbols(std::move(symbols));
}

void save_plan_json(const fs::path& path, const StagePlan& plan) {
    json j;
    j["n_stages"] = plan.n_stages;
    j["base"] = plan.base_genes;
    j["stages"] = json::array();
    for (int k = 0; k < plan.n_stages; ++k) {
        json stage;
        stage["genes"] = plan.stage_genes[static_cast<std::size_t>(k)];
        stage["sample_ids"] = plan.stage_sample_ids[static_cast<std::size_t>(k)];
        j["stages"].push_back(stage);
    }
    j["crucial"] = json::object();
    for (const auto& [name, genes] : plan.crucial_registry) j["crucial"][name] = genes;
    atomic_write_file(path, j.dump(2) + "\n");
}

StagePlan load_plan_json(const fs::path& path, std::int64_t vocab_size) {
    json j = parse_json(read_file(path), path.string());
    require_keys(j, {"n_stages", "base", "stages", "crucial"}, path.string());
    StagePlan plan;
    try {
        plan.n_stages = j.at("n_stages").get<int>();
        plan.base_genes = int_list(j.at("base"), "base");
        for (const auto& stage : j.at("stages")) {
            require_keys(stage, {"genes", "sample_ids"}, path.string() + " stages[]");
            plan.stage_genes.push_back(int_list(stage.at("genes"), "stage genes"));
            plan.stage_sample_ids.push_back(int_list(stage.at("sample_ids"), "stage sample_ids"));
        }
        for (auto it = j.at("crucial").begin(); it != j.at("crucial").end(); ++it) {
            plan.crucial_registry[it.key()] = int_list(it.value(), "crucial " + it.key());
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    plan.validate(vocab_size);
    return plan;
}

void save_checkpoint(const fs::path& path, const ModelParams& params) {
    auto named = params.named();
    std::sort(named.begin(), named.end(), [](const auto& a, const auto& b) {
        return a.first < b.first;
    });

    std::string payload;
    json tensors = json::object();
    std::int64_t offset = 0;
    for (const auto& [name, tensor] : named) {
        tensor->check_finite("checkpoint save");
        json entry;
        entry["shape"] = {tensor->rows, tensor->cols};
        entry["offset"] = offset;
        entry["dtype"] = "f32";
        tensors[name] = entry;
        for (double v : tensor->values) append_f32(payload, static_cast<float>(v));
        offset += tensor->numel() * 4;
    }

    json header;
    header["format_version"] = kCheckpointVersion;
    header["model"] = {{"vocab_size", params.config.vocab_size},
                       {"d_model", params.config.d_model},
                       {"n_layers", params.config.n_layers},
                       {"n_heads", params.config.n_heads},
                       {"d_ff", params.config.d_ff},
                       {"max_len", params.config.max_len}};
    header["tensors"] = tensors;
    header["payload_checksum"] = hex64(fnv1a64(payload.data(), payload.size()));

    const std::string header_text = header.dump();
    std::string out;
    const auto len = static_cast<std::uint32_t>(header_text.size());
    out.push_back(static_cast<char>(len & 0xff));
    out.push_back(static_cast<char>((len >> 8) & 0xff));
    out.push_back(static_cast<char>((len >> 16) & 0xff));
    out.push_back(static_cast<char>((len >> 24) & 0xff));
    out += header_text;
    out += payload;
    atomic_write_file(path, out);
}

ModelParams load_checkpoint(const fs::path& path) {
    const std::string blob = read_file(path);
    if (blob.size() < 4) throw CheckpointError(path.string() + ": truncated header length");
    const std::uint32_t len = static_cast<std::uint8_t>(blob[0]) |
                              (static_cast<std::uint8_t>(blob[1]) << 8) |
                              (static_cast<std::uint8_t>(blob[2]) << 16) |
                              (static_cast<std::uint8_t>(blob[3]) << 24);
    if (blob.size() < 4 + static_cast<std::size_t>(len))
        throw CheckpointError(path.string() + ": truncated header");
    json header = json::parse(blob.substr(4, len), nullptr, false);
    if (header.is_discarded()) throw CheckpointError(path.string() + ": malformed header JSON");
    if (!header.contains("format_version") ||
        header.at("format_version").get<int>() != kCheckpointVersion)
        throw CheckpointError(path.string() + ": unsupported format version");

    const std::string payload = blob.substr(4 + len);
    const std::string checksum = hex64(fnv1a64(payload.data(), payload.size()));
    if (checksum != header.at("payload_checksum").get<std::string>())
        throw CheckpointError(path.string() + ": payload checksum mismatch");

    const auto& m = header.at("model");
    ModelConfig config;
    config.vocab_size = m.at("vocab_size").get<std::int64_t>();
    config.d_model = m.at("d_model").get<std::int64_t>();
    config.n_layers = m.at("n_layers").get<std::int64_t>();
    config.n_heads = m.at("n_heads").get<std::int64_t>();
    config.d_ff = m.at("d_ff").get<std::int64_t>();
    config.max_len = m.at("max_len").get<std::int64_t>();
    config.validate();

    ModelParams params = allocate_params(config);
    auto named = params.named();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != named.size())
        throw CheckpointError(path.string() + ": tensor manifest size mismatch");
    std::int64_t expected_offset = 0;
    // manifest is sorted by name (JSON object order); offsets must follow it
    std::vector<std::pair<std::string, Tensor*>> sorted = named;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [name, tensor] : sorted) {
        if (!tensors.contains(name))
            throw CheckpointError(path.string() + ": missing tensor " + name);
        const auto& entry = tensors.at(name);
        const auto shape = int_list(entry.at("shape"), "shape of " + name);
        if (shape.size() != 2 || shape[0] != tensor->rows || shape[1] != tensor->cols)
            throw CheckpointError(path.string() + ": shape mismatch for " + name);
        if (entry.at("dtype").get<std::string>() != "f32")
            throw CheckpointError(path.string() + ": unsupported dtype for " + name);
        const auto offset = entry.at("offset").get<std::int64_t>();
        if (offset != expected_offset)
            throw CheckpointError(path.string() + ": offsets out of manifest order at " + name);
        const std::int64_t bytes = tensor->numel() * 4;
        if (offset + bytes > static_cast<std::int64_t>(payload.size()))
            throw CheckpointError(path.string() + ": truncated payload at " + name);
        for (std::int64_t i = 0; i < tensor->numel(); ++i) {
            tensor->values[static_cast<std::size_t>(i)] =
                static_cast<double>(read_f32(payload.data() + offset + i * 4));
        }
        expected_offset = offset + bytes;
    }
    if (expected_offset != static_cast<std::int64_t>(payload.size()))
        throw CheckpointError(path.string() + ": payload has trailing bytes");
    return params;
}

std::string results_csv_text(std::span<const ResultRow> rows) {
    std::string out = "run_id,seed,strategy,model_stage,target_kind,target_id,metric,value\n";
    for (const auto& r : rows) {
        out += r.run_id;
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += r.strategy;
        out += ',';
        out += std::to_string(r.model_stage);
        out += ',';
        out += r.target_kind;
        out += ',';
        out += r.target_id;
        out += ',';
        out += r.metric;
        out += ',';
        out += format_double(r.value);
        out += '\n';
    }
    return out;
}

void write_results_csv(const fs::path& path, std::span<const ResultRow> rows) {
    atomic_write_file(path, results_csv_text(rows));
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) return {};
    if (line != "run_id,seed,strategy,model_stage,target_kind,target_id,metric,value")
        throw ParseError(path.string() + ": unexpected CSV header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 8)
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields");
        ResultRow r;
        r.run_id = fields[0];
        r.seed = std::stoull(fields[1]);
        r.strategy = fields[2];
        r.model_stage = std::stoi(fields[3]);
        r.target_kind = fields[4];
        r.target_id = fields[5];
        r.metric = fields[6];
        r.value = std::stod(fields[7]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_manifest(const fs::path& path, const RunManifest& manifest) {
    json j;
    j["run_id"] = manifest.run_id;
    j["seed"] = manifest.seed;
    j["strategy"] = {{"kind", manifest.strategy_kind},
                     {"replay_buffer_per_stage", manifest.replay_buffer_per_stage},
                     {"lambda", manifest.lambda}};
    j["n_stages"] = manifest.n_stages;
    j["config"] = json::parse(manifest.config_json);
    j["data_hashes"] = {{"corpus", manifest.corpus_hash},
                        {"vocab", manifest.vocab_hash},
                        {"plan", manifest.plan_hash}};
    j["train_id_hashes"] = manifest.train_id_hashes;
    atomic_write_file(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const fs::path& path) {
    json j = parse_json(read_file(path), path.string());
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.strategy_kind = j.at("strategy").at("kind").get<std::string>();
        m.replay_buffer_per_stage = j.at("strategy").at("replay_buffer_per_stage").get<std::int64_t>();
        m.lambda = j.at("strategy").at("lambda").get<double>();
        m.n_stages = j.at("n_stages").get<int>();
        m.config_json = j.at("config").dump();
        m.corpus_hash = j.at("data_hashes").at("corpus").get<std::string>();
        m.vocab_hash = j.at("data_hashes").at("vocab").get<std::string>();
        m.plan_hash = j.at("data_hashes").at("plan").get<std::string>();
        for (const auto& h : j.at("train_id_hashes")) m.train_id_hashes.push_back(h.get<std::string>());
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return m;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string hash_file(const fs::path& path) {
    const std::string blob = read_file(path);
    return hex64(fnv1a64(blob.data(), blob.size()));
}

std::string hash_ids(std::span<const std::int64_t> ids) {
    return hex64(fnv1a64(ids.data(), ids.size() * sizeof(std::int64_t)));
}

void atomic_write_file(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    static std::atomic<std::uint64_t> counter{0};
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                         std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw NumericError("cannot format double");
    return std::string(buf, ptr);
}

namespace {

bool segment_match(const std::string& pattern, const std::string& text) {
    // '*' within one segment
    std::size_t p = 0, t = 0, star = std::string::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

void glob_walk(const fs::path& dir, std::span<const std::string> segments, std::size_t idx,
               std::vector<fs::path>& out) {
    if (idx == segments.size()) {
        if (fs::exists(dir) && fs::is_regular_file(dir)) out.push_back(dir);
        return;
    }
    const std::string& seg = segments[idx];
    if (seg == "**") {
        glob_walk(dir, segments, idx + 1, out);
        if (fs::exists(dir) && fs::is_directory(dir)) {
            for (const auto& entry : fs::directory_iterator(dir)) {
                if (entry.is_directory()) glob_walk(entry.path(), segments, idx, out);
            }
        }
        return;
    }
    if (seg.find('*') == std::string::npos) {
        glob_walk(dir / seg, segments, idx + 1, out);
        return;
    }
    if (!fs::exists(dir) || !fs::is_directory(dir)) return;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (segment_match(seg, entry.path().filename().string())) {
            glob_walk(entry.path(), segments, idx + 1, out);
        }
    }
}

}  // namespace

std::vector<fs::path> glob_paths(const std::string& pattern) {
    fs::path pat(pattern);
    fs::path root = pat.is_absolute() ? fs::path("/") : fs::path(".");
    std::vector<std::string> segments;
    for (const auto& part : pat.relative_path()) segments.push_back(part.string());
    std::vector<fs::path> out;
    glob_walk(root, segments, 0, out);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace gil
