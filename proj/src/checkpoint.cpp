#include "triage/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace triage::checkpoint {

using nlohmann::json;

namespace {

constexpr int kVersion = 1;

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows; ++r)
        rows.push_back(std::vector<double>(m.row(r), m.row(r) + m.cols));
    return rows;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw std::runtime_error("checkpoint: bad matrix block");
    Mat m(j.size(), j.front().size());
    for (std::size_t r = 0; r < m.rows; ++r) {
        const auto row = j[r].get<std::vector<double>>();
        if (row.size() != m.cols)
            throw std::runtime_error("checkpoint: ragged matrix block");
        std::copy(row.begin(), row.end(), m.row(r));
    }
    return m;
}

json stack_to_json(const numerics::DenseStack& stack) {
    json weights = json::object();
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        weights[prefix + ".weight"] = mat_to_json(stack.layers[l].weight);
        weights[prefix + ".bias"] = stack.layers[l].bias;
    }
    return weights;
}

numerics::DenseStack stack_from_json(const json& weights, std::size_t depth) {
    numerics::DenseStack stack;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        numerics::DenseParams p;
        p.weight = mat_from_json(weights.at(prefix + ".weight"));
        p.bias = weights.at(prefix + ".bias").get<Vec>();
        if (p.bias.size() != p.weight.rows)
            throw std::runtime_error("checkpoint: bias/weight shape mismatch in " + prefix);
        stack.layers.push_back(std::move(p));
    }
    return stack;
}

json read_checkpoint(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& ex) {
        throw std::runtime_error("checkpoint " + path + ": malformed JSON: " + ex.what());
    }
    if (!doc.contains("version") || !doc["version"].is_number_integer() ||
        doc["version"].get<int>() != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version");
    if (doc.value("kind", "") != expected_kind)
        throw std::runtime_error("checkpoint " + path + ": expected kind '" + expected_kind +
                                 "', found '" + doc.value("kind", "<missing>") + "'");
    return doc;
}

void write_checkpoint(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void save_binary_head(const rank::BinaryHead& head, const std::string& path) {
    json doc;
    doc["version"] = kVersion;
    doc["kind"] = "binary_head";
    doc["depth"] = head.stack.layers.size();
    doc["weights"] = stack_to_json(head.stack);
    write_checkpoint(doc, path);
}

rank::BinaryHead load_binary_head(const std::string& path) {
    const json doc = read_checkpoint(path, "binary_head");
    rank::BinaryHead head;
    head.stack = stack_from_json(doc.at("weights"), doc.at("depth").get<std::size_t>());
    return head;
}

void save_tag_head(const tag::TagHead& head, const std::string& path) {
    json doc;
    doc["version"] = kVersion;
    doc["kind"] = "tag_head";
    doc["depth"] = head.stack.layers.size();
    doc["tags"] = head.tags;
    doc["thresholds"] = head.thresholds;
    doc["weights"] = stack_to_json(head.stack);
    write_checkpoint(doc, path);
}

tag::TagHead load_tag_head(const std::string& path) {
    const json doc = read_checkpoint(path, "tag_head");
    tag::TagHead head;
    head.stack = stack_from_json(doc.at("weights"), doc.at("depth").get<std::size_t>());
    head.tags = doc.at("tags").get<std::vector<std::string>>();
    head.thresholds = doc.at("thresholds").get<Vec>();
    if (head.tags.size() != head.thresholds.size() ||
        head.tags.size() != head.stack.output_dim())
        throw std::runtime_error("checkpoint " + path + ": tag/threshold/output size mismatch");
    return head;
}

void save_decoder(const decode::ConditionedDecoderParams& params, const std::string& path) {
    json doc;
    doc["version"] = kVersion;
    doc["kind"] = "decoder";
    doc["mode"] = std::string(decode::mode_name(params.mode));
    doc["dims"] = {{"vocab", params.vocab.size()},
                   {"embed", params.embed_dim},
                   {"hidden", params.hidden_dim},
                   {"visual", params.visual_dim}};
    doc["max_caption_length"] = params.vocab.max_caption_length;
    doc["vocab"] = params.vocab.tokens;
    json weights;
    weights["w_embed"] = mat_to_json(params.w_embed);
    weights["w_i"] = mat_to_json(params.w_i);
    weights["b_i"] = params.b_i;
    weights["w_f"] = mat_to_json(params.w_f);
    weights["b_f"] = params.b_f;
    weights["w_o"] = mat_to_json(params.w_o);
    weights["b_o"] = params.b_o;
    weights["w_q"] = mat_to_json(params.w_q);
    weights["b_q"] = params.b_q;
    weights["w_out"] = mat_to_json(params.w_out);
    weights["b_out"] = params.b_out;
    if (params.visual_init()) {
        weights["w_init"] = mat_to_json(params.w_init);
        weights["b_init"] = params.b_init;
    }
    doc["weights"] = weights;
    write_checkpoint(doc, path);
}

decode::ConditionedDecoderParams load_decoder(const std::string& path) {
    const json doc = read_checkpoint(path, "decoder");
    decode::ConditionedDecoderParams p;
    p.mode = decode::mode_from_name(doc.at("mode").get<std::string>());
    const json& dims = doc.at("dims");
    p.embed_dim = dims.at("embed").get<std::size_t>();
    p.hidden_dim = dims.at("hidden").get<std::size_t>();
    p.visual_dim = dims.at("visual").get<std::size_t>();

    p.vocab.tokens = doc.at("vocab").get<std::vector<std::string>>();
    p.vocab.max_caption_length = doc.at("max_caption_length").get<std::size_t>();
    for (std::size_t i = 0; i < p.vocab.tokens.size(); ++i) p.vocab.index[p.vocab.tokens[i]] = i;
    if (p.vocab.size() != dims.at("vocab").get<std::size_t>())
        throw std::runtime_error("checkpoint " + path + ": vocab size mismatch");

    const json& weights = doc.at("weights");
    p.w_embed = mat_from_json(weights.at("w_embed"));
    p.w_i = mat_from_json(weights.at("w_i"));
    p.b_i = weights.at("b_i").get<Vec>();
    p.w_f = mat_from_json(weights.at("w_f"));
    p.b_f = weights.at("b_f").get<Vec>();
    p.w_o = mat_from_json(weights.at("w_o"));
    p.b_o = weights.at("b_o").get<Vec>();
    p.w_q = mat_from_json(weights.at("w_q"));
    p.b_q = weights.at("b_q").get<Vec>();
    p.w_out = mat_from_json(weights.at("w_out"));
    p.b_out = weights.at("b_out").get<Vec>();
    if (p.visual_init()) {
        p.w_init = mat_from_json(weights.at("w_init"));
        p.b_init = weights.at("b_init").get<Vec>();
    }
    if (p.w_i.cols != p.gate_input_width() || p.w_embed.rows != p.vocab.size())
        throw std::runtime_error("checkpoint " + path + ": weight shapes do not match dims");
    return p;
}

}  // namespace triage::checkpoint
