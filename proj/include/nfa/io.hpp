#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nfa/diagnostics.hpp"
#include "nfa/network.hpp"
#include "nfa/targets.hpp"

namespace nfa {

/// Shortest decimal that round-trips the exact 64-bit value.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Writes via a temp file then renames, so readers never observe partial
/// output.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// --- network checkpoints -----------------------------------------------------

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.flat().begin(), m.flat().end());
    return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) throw Error("checkpoint: matrix size mismatch");
    std::copy(data.begin(), data.end(), m.flat().begin());
    if (!m.all_finite()) throw Error("checkpoint: non-finite matrix entries");
    return m;
}

inline std::string head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::none: return "none";
        case HeadKind::relu_head: return "relu";
        case HeadKind::feedforward: return "feedforward";
    }
    return "?";
}

inline HeadKind head_kind_from_name(const std::string& s) {
    if (s == "none") return HeadKind::none;
    if (s == "relu") return HeadKind::relu_head;
    if (s == "feedforward") return HeadKind::feedforward;
    throw Error("checkpoint: unknown head kind " + s);
}

inline nlohmann::json checkpoint_to_json(const Network& net) {
    nlohmann::json j;
    j["format"] = "nfa-checkpoint-v1";
    j["head"] = head_kind_name(net.head);
    j["weights"] = nlohmann::json::array();
    for (const Matrix& w : net.stack.weights) j["weights"].push_back(matrix_to_json(w));
    if (net.stack.bias1)
        j["bias1"] = *net.stack.bias1;
    else
        j["bias1"] = nullptr;
    if (net.head != HeadKind::none) {
        j["head_a"] = net.head_a;
        j["head_b2"] = net.head_b2;
    }
    if (net.head == HeadKind::feedforward) j["layer_biases"] = net.layer_biases;
    return j;
}

inline Network checkpoint_from_json(const nlohmann::json& j) {
    if (j.at("format").get<std::string>() != "nfa-checkpoint-v1")
        throw Error("checkpoint: unknown format tag");
    Network net;
    net.head = head_kind_from_name(j.at("head").get<std::string>());
    for (const auto& w : j.at("weights")) net.stack.weights.push_back(matrix_from_json(w));
    if (!j.at("bias1").is_null()) net.stack.bias1 = j.at("bias1").get<Vec>();
    if (net.head != HeadKind::none) {
        net.head_a = j.at("head_a").get<Vec>();
        net.head_b2 = j.at("head_b2").get<double>();
    }
    if (net.head == HeadKind::feedforward)
        net.layer_biases = j.at("layer_biases").get<std::vector<Vec>>();
    net.validate();
    return net;
}

inline void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    atomic_write(path, checkpoint_to_json(net).dump(2) + "\n");
}

inline Network load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
}

// --- dataset persistence -----------------------------------------------------

/// CSV with header x_0..x_{d-1},y_0..y_{m-1}; values as full-precision
/// decimals that round-trip the underlying 64-bit reals exactly.
inline std::string dataset_to_csv(const Dataset& data) {
    std::string out;
    for (std::size_t j = 0; j < data.input_dim(); ++j) {
        if (j) out += ',';
        out += "x_" + std::to_string(j);
    }
    for (std::size_t j = 0; j < data.target_dim(); ++j) {
        out += ",y_" + std::to_string(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.input_dim(); ++j) {
            if (j) out += ',';
            out += format_double(data.inputs(i, j));
        }
        for (std::size_t j = 0; j < data.target_dim(); ++j) {
            out += ',';
            out += format_double(data.targets(i, j));
        }
        out += '\n';
    }
    return out;
}

inline Dataset dataset_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw Error("dataset csv: empty file");
    std::size_t d = 0, m = 0;
    {
        std::istringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            if (cell.rfind("x_", 0) == 0) ++d;
            else if (cell.rfind("y_", 0) == 0) ++m;
            else throw Error("dataset csv: unexpected header column " + cell);
        }
    }
    if (d == 0 || m == 0) throw Error("dataset csv: missing columns");
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::size_t count = 0;
        while (std::getline(row, cell, ',')) {
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{}) throw Error("dataset csv: bad number " + cell);
            values.push_back(v);
            ++count;
        }
        if (count != d + m) throw Error("dataset csv: ragged row");
        ++rows;
    }
    Dataset data;
    data.inputs = Matrix(rows, d);
    data.targets = Matrix(rows, m);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < d; ++j) data.inputs(i, j) = values[i * (d + m) + j];
        for (std::size_t j = 0; j < m; ++j)
            data.targets(i, j) = values[i * (d + m) + d + j];
    }
    return data;
}

// --- trace / sweep CSV -------------------------------------------------------

/// epoch,t,loss,cos_inv_L,defect_1..defect_{L-1},gap_thm2,gap_corollary
inline std::string trace_to_csv(const AlignmentTrace& trace, std::size_t depth) {
    std::string out = "epoch,t,loss,cos_inv_L";
    for (std::size_t l = 1; l < depth; ++l) out += ",defect_" + std::to_string(l);
    out += ",gap_thm2,gap_corollary\n";
    for (std::size_t i = 0; i < trace.records(); ++i) {
        out += format_double(trace.epochs[i]);
        out += ',';
        out += format_double(trace.times[i]);
        out += ',';
        out += format_double(trace.loss[i]);
        out += ',';
        out += format_double(trace.cos_inv_l[i]);
        for (std::size_t l = 0; l + 1 < depth; ++l) {
            out += ',';
            out += format_double(trace.defects[i][l]);
        }
        out += ',';
        out += format_double(trace.gap_thm2[i]);
        out += ',';
        out += format_double(trace.gap_corollary[i]);
        out += '\n';
    }
    return out;
}

/// epoch,alpha_tilde,cosine rows for every recorded checkpoint.
inline std::string alpha_sweep_to_csv(const AlignmentTrace& trace) {
    std::string out = "epoch,alpha_tilde,cosine\n";
    for (std::size_t i = 0; i < trace.alpha_cosines.size(); ++i)
        for (std::size_t k = 0; k < trace.alpha_tilde_grid.size(); ++k) {
            out += format_double(trace.epochs[i]);
            out += ',';
            out += format_double(trace.alpha_tilde_grid[k]);
            out += ',';
            out += format_double(trace.alpha_cosines[i][k]);
            out += '\n';
        }
    return out;
}

}  // namespace nfa
