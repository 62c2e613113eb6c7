#include "cpomdp/learning.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "cpomdp/error.hpp"
#include "cpomdp/random.hpp"

namespace cpomdp::learning {
namespace {

std::vector<double> smoothed(const std::vector<std::size_t>& counts, double s) {
    std::size_t total = 0;
    for (std::size_t c : counts) {
        total += c;
    }
    const double denom = static_cast<double>(total) + static_cast<double>(counts.size()) * s;
    std::vector<double> row;
    row.reserve(counts.size());
    for (std::size_t c : counts) {
        row.push_back((static_cast<double>(c) + s) / denom);
    }
    return row;
}

std::vector<double> full_row(const pomdp::UcPomdpModel& m, int s, int a, int u) {
    std::vector<double> out(m.total_states(), 0.0);
    const auto rel = m.confounded[s] ? m.p_uc.row(static_cast<std::size_t>(a) * m.confounder_arity() + u)
                                     : m.p_0.row(static_cast<std::size_t>(a));
    for (int ds = 0; ds < m.num_relative; ++ds) {
        out[m.successor[static_cast<std::size_t>(s) * m.num_relative + ds]] += rel[ds];
    }
    return out;
}

double max_diff(const scm::CategoricalTable& x, const scm::CategoricalTable& y) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.entries().size(); ++i) {
        m = std::max(m, std::abs(x.entries()[i] - y.entries()[i]));
    }
    return m;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

template <typename T>
T parse_number(std::string_view text, int line, int column, const char* what) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && text.front() == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || first == last) {
        throw ParseError(line, column, std::string("invalid ") + what + " '" + std::string(text) + "'");
    }
    return value;
}

/// Whitespace-separated fields with their 1-based columns.
std::vector<std::pair<std::string_view, int>> split_fields(std::string_view line, char sep) {
    std::vector<std::pair<std::string_view, int>> fields;
    std::size_t i = 0;
    if (sep == ',') {
        while (true) {
            const std::size_t end = line.find(',', i);
            fields.emplace_back(trim(line.substr(i, end == std::string_view::npos ? end : end - i)),
                                static_cast<int>(i) + 1);
            if (end == std::string_view::npos) {
                break;
            }
            i = end + 1;
        }
        return fields;
    }
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') {
            ++i;
        }
        if (i > start) {
            fields.emplace_back(line.substr(start, i - start), static_cast<int>(start) + 1);
        }
    }
    return fields;
}

/// "key=value" pairs separated by whitespace.
std::map<std::string, std::pair<std::string, int>> parse_pairs(std::string_view text, int line, int column_offset) {
    std::map<std::string, std::pair<std::string, int>> out;
    for (const auto& [field, col] : split_fields(text, ' ')) {
        const std::size_t eq = field.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw ParseError(line, column_offset + col, "expected key=value, got '" + std::string(field) + "'");
        }
        out[std::string(field.substr(0, eq))] = {std::string(field.substr(eq + 1)),
                                                 column_offset + col + static_cast<int>(eq) + 1};
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generation and fitting

Dataset generate_dataset(const pomdp::UcPomdpModel& truth, std::size_t n, std::uint64_t seed) {
    if (n < 1) {
        throw UsageError("dataset size must be at least 1");
    }
    truth.validate();
    Dataset data;
    data.seed = seed;
    data.model_id = truth.name;
    data.arity_u = truth.confounder_arity();
    data.arity_a = truth.num_actions;
    data.arity_ds = truth.num_relative;
    data.records.reserve(n);

    Rng rng(seed);
    const auto prior = truth.confounder_prior.row(0);
    for (std::size_t i = 0; i < n; ++i) {
        Record r;
        r.u = sample_categorical(prior, rng.uniform());
        const double pick = rng.uniform() * truth.num_states;
        const int s = std::min(static_cast<int>(pick), truth.num_states - 1);
        r.a = pomdp::sample_reactive_action(truth, s, r.u, rng);
        r.uc = truth.confounded[s];
        const auto row = r.uc ? truth.p_uc.row(static_cast<std::size_t>(r.a) * data.arity_u + r.u)
                              : truth.p_0.row(static_cast<std::size_t>(r.a));
        r.ds = sample_categorical(row, rng.uniform());
        data.records.push_back(r);
    }
    return data;
}

LearnedParams fit(const Dataset& dataset, double smoothing) {
    if (dataset.records.empty()) {
        throw UsageError("cannot fit an empty dataset");
    }
    if (!(smoothing > 0.0)) {
        throw UsageError("smoothing must be positive");
    }
    const int nu = dataset.arity_u;
    const int na = dataset.arity_a;
    const int nds = dataset.arity_ds;
    if (nu < 1 || na < 1 || nds < 1) {
        throw UsageError("dataset arities must be positive");
    }
    std::vector<std::size_t> cu(nu, 0);
    std::vector<std::vector<std::size_t>> cuc(static_cast<std::size_t>(na) * nu, std::vector<std::size_t>(nds, 0));
    std::vector<std::vector<std::size_t>> c0(na, std::vector<std::size_t>(nds, 0));
    for (const Record& r : dataset.records) {
        if (r.u < 0 || r.u >= nu || r.a < 0 || r.a >= na || r.ds < 0 || r.ds >= nds) {
            throw UsageError("record category out of range");
        }
        ++cu[r.u];
        if (r.uc) {
            ++cuc[static_cast<std::size_t>(r.a) * nu + r.u][r.ds];
        } else {
            ++c0[r.a][r.ds];
        }
    }

    LearnedParams p;
    p.n = dataset.size();
    p.smoothing = smoothing;
    p.seed = dataset.seed;
    p.model_id = dataset.model_id;
    p.p_u = scm::CategoricalTable::root(smoothed(cu, smoothing));
    p.counts_u.push_back(dataset.size());
    std::vector<std::vector<double>> rows;
    for (const auto& counts : cuc) {
        rows.push_back(smoothed(counts, smoothing));
        std::size_t t = 0;
        for (std::size_t c : counts) {
            t += c;
        }
        p.counts_uc.push_back(t);
    }
    p.p_uc = scm::CategoricalTable({na, nu}, rows);
    rows.clear();
    for (const auto& counts : c0) {
        rows.push_back(smoothed(counts, smoothing));
        std::size_t t = 0;
        for (std::size_t c : counts) {
            t += c;
        }
        p.counts_0.push_back(t);
    }
    p.p_0 = scm::CategoricalTable({na}, rows);
    return p;
}

pomdp::UcPomdpModel assemble_model(const pomdp::UcPomdpModel& structure, const LearnedParams& params) {
    if (params.p_u.arity() != structure.confounder_arity() ||
        params.p_uc.parent_arities() != structure.p_uc.parent_arities() ||
        params.p_uc.arity() != structure.num_relative ||
        params.p_0.parent_arities() != structure.p_0.parent_arities() ||
        params.p_0.arity() != structure.num_relative) {
        throw UsageError("learned parameter shapes do not match the model structure");
    }
    pomdp::UcPomdpModel model = structure;
    model.name = structure.name + "-learned";
    model.confounder_prior = params.p_u;
    model.p_uc = params.p_uc;
    model.p_0 = params.p_0;
    model.validate();
    return model;
}

double eval_kl_full_transition(const pomdp::UcPomdpModel& learned, const pomdp::UcPomdpModel& truth) {
    if (learned.total_states() != truth.total_states() || learned.num_actions != truth.num_actions ||
        learned.confounder_arity() != truth.confounder_arity()) {
        throw UsageError("models have different spaces");
    }
    double total = 0.0;
    std::size_t contexts = 0;
    for (int s = 0; s < truth.num_states; ++s) {
        for (int a = 0; a < truth.num_actions; ++a) {
            for (int u = 0; u < truth.confounder_arity(); ++u) {
                total += scm::kl_divergence(full_row(truth, s, a, u), full_row(learned, s, a, u));
                ++contexts;
            }
        }
    }
    return total / static_cast<double>(contexts);
}

ParamErrors max_abs_errors(const pomdp::UcPomdpModel& learned, const pomdp::UcPomdpModel& truth) {
    if (learned.p_uc.entries().size() != truth.p_uc.entries().size() ||
        learned.p_0.entries().size() != truth.p_0.entries().size() ||
        learned.confounder_prior.entries().size() != truth.confounder_prior.entries().size()) {
        throw UsageError("models have different table shapes");
    }
    return {max_diff(learned.confounder_prior, truth.confounder_prior), max_diff(learned.p_uc, truth.p_uc),
            max_diff(learned.p_0, truth.p_0)};
}

// ---------------------------------------------------------------------------
// Dataset CSV

void write_dataset_csv(std::ostream& out, const Dataset& d) {
    out << "# seed=" << d.seed << " model=" << d.model_id << " n=" << d.size() << " arity_u=" << d.arity_u
        << " arity_a=" << d.arity_a << " arity_ds=" << d.arity_ds << '\n';
    out << "uc,u,a,ds\n";
    std::string buffer;
    for (const Record& r : d.records) {
        buffer.clear();
        buffer += r.uc ? '1' : '0';
        buffer += ',';
        buffer += std::to_string(r.u);
        buffer += ',';
        buffer += std::to_string(r.a);
        buffer += ',';
        buffer += std::to_string(r.ds);
        buffer += '\n';
        out << buffer;
    }
}

Dataset read_dataset_csv(std::istream& in) {
    Dataset d;
    std::string line;
    int line_no = 0;
    bool have_meta = false;
    bool have_header = false;
    std::optional<std::size_t> declared_n;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty()) {
            continue;
        }
        if (view.front() == '#') {
            if (have_meta || have_header) {
                throw ParseError(line_no, 1, "unexpected metadata line");
            }
            for (const auto& [key, value] : parse_pairs(view.substr(1), line_no, 1)) {
                const auto& [text, col] = value;
                if (key == "seed") {
                    d.seed = parse_number<std::uint64_t>(text, line_no, col, "seed");
                } else if (key == "model") {
                    d.model_id = text;
                } else if (key == "n") {
                    declared_n = parse_number<std::size_t>(text, line_no, col, "record count");
                } else if (key == "arity_u") {
                    d.arity_u = parse_number<int>(text, line_no, col, "arity");
                } else if (key == "arity_a") {
                    d.arity_a = parse_number<int>(text, line_no, col, "arity");
                } else if (key == "arity_ds") {
                    d.arity_ds = parse_number<int>(text, line_no, col, "arity");
                }
            }
            have_meta = true;
            continue;
        }
        if (!have_header) {
            if (view != "uc,u,a,ds") {
                throw ParseError(line_no, 1, "expected header 'uc,u,a,ds'");
            }
            have_header = true;
            continue;
        }
        const auto fields = split_fields(view, ',');
        if (fields.size() != 4) {
            throw ParseError(line_no, 1, "expected 4 fields, got " + std::to_string(fields.size()));
        }
        Record r;
        const int uc = parse_number<int>(fields[0].first, line_no, fields[0].second, "uc flag");
        if (uc != 0 && uc != 1) {
            throw ParseError(line_no, fields[0].second, "uc flag must be 0 or 1");
        }
        r.uc = uc == 1;
        r.u = parse_number<int>(fields[1].first, line_no, fields[1].second, "u");
        r.a = parse_number<int>(fields[2].first, line_no, fields[2].second, "a");
        r.ds = parse_number<int>(fields[3].first, line_no, fields[3].second, "ds");
        auto check = [&](int value, int arity, std::size_t field, const char* what) {
            if (value < 0 || (arity > 0 && value >= arity)) {
                throw ParseError(line_no, fields[field].second,
                                 std::string(what) + " category outside the declared arity");
            }
        };
        check(r.u, d.arity_u, 1, "u");
        check(r.a, d.arity_a, 2, "a");
        check(r.ds, d.arity_ds, 3, "ds");
        d.records.push_back(r);
    }
    if (!have_header) {
        throw ParseError(line_no + 1, 1, "missing header 'uc,u,a,ds'");
    }
    if (declared_n && *declared_n != d.records.size()) {
        throw ParseError(line_no + 1, 1,
                         "metadata declares " + std::to_string(*declared_n) + " records, found " +
                             std::to_string(d.records.size()));
    }
    // Without metadata, infer arities from the data.
    auto infer = [&](int& arity, auto get) {
        if (arity == 0) {
            for (const Record& r : d.records) {
                arity = std::max(arity, get(r) + 1);
            }
        }
    };
    infer(d.arity_u, [](const Record& r) { return r.u; });
    infer(d.arity_a, [](const Record& r) { return r.a; });
    infer(d.arity_ds, [](const Record& r) { return r.ds; });
    return d;
}

// ---------------------------------------------------------------------------
// Params file

void write_params(std::ostream& out, const LearnedParams& p) {
    const int nu = p.p_u.arity();
    const int na = p.p_0.parent_arities().empty() ? 0 : p.p_0.parent_arities()[0];
    auto row = [&](std::span<const double> values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            out << (i ? " " : "") << fmt17(values[i]);
        }
        out << '\n';
    };
    out << "[meta]\n";
    out << "model = " << p.model_id << '\n';
    out << "n = " << p.n << '\n';
    out << "smoothing = " << fmt17(p.smoothing) << '\n';
    out << "seed = " << p.seed << '\n';
    out << "arity_u = " << nu << '\n';
    out << "arity_a = " << na << '\n';
    out << "arity_ds = " << p.p_0.arity() << '\n';
    out << "\n[p_u]\n";
    out << "count = " << (p.counts_u.empty() ? 0 : p.counts_u[0]) << '\n';
    row(p.p_u.row(0));
    for (int a = 0; a < na; ++a) {
        for (int u = 0; u < nu; ++u) {
            const std::size_t i = static_cast<std::size_t>(a) * nu + u;
            out << "\n[p_uc a=" << a << " u=" << u << "]\n";
            out << "count = " << (i < p.counts_uc.size() ? p.counts_uc[i] : 0) << '\n';
            row(p.p_uc.row(i));
        }
    }
    for (int a = 0; a < na; ++a) {
        out << "\n[p_0 a=" << a << "]\n";
        out << "count = " << (static_cast<std::size_t>(a) < p.counts_0.size() ? p.counts_0[a] : 0) << '\n';
        row(p.p_0.row(static_cast<std::size_t>(a)));
    }
}

LearnedParams read_params(std::istream& in) {
    struct Section {
        std::string kind;
        int a = -1;
        int u = -1;
        std::optional<std::vector<double>> row;
        std::size_t count = 0;
        int line = 0;
    };
    std::map<std::string, std::pair<std::string, int>> meta;
    std::vector<Section> sections;
    bool in_meta = false;
    std::string line;
    int line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty() || view.front() == '#') {
            continue;
        }
        if (view.front() == '[') {
            if (view.back() != ']') {
                throw ParseError(line_no, static_cast<int>(view.size()), "unterminated section header");
            }
            const std::string_view body = view.substr(1, view.size() - 2);
            const std::size_t space = body.find(' ');
            const std::string kind(body.substr(0, space));
            in_meta = kind == "meta";
            if (in_meta) {
                continue;
            }
            Section sec;
            sec.kind = kind;
            sec.line = line_no;
            const auto attrs = space == std::string_view::npos
                                   ? std::map<std::string, std::pair<std::string, int>>{}
                                   : parse_pairs(body.substr(space + 1), line_no, static_cast<int>(space) + 2);
            auto attr = [&](const char* key) {
                const auto it = attrs.find(key);
                if (it == attrs.end()) {
                    throw ParseError(line_no, 1, "section [" + kind + "] needs " + key + "=");
                }
                return parse_number<int>(it->second.first, line_no, it->second.second, key);
            };
            if (kind == "p_u") {
            } else if (kind == "p_uc") {
                sec.a = attr("a");
                sec.u = attr("u");
            } else if (kind == "p_0") {
                sec.a = attr("a");
            } else {
                throw ParseError(line_no, 2, "unknown section '" + kind + "'");
            }
            sections.push_back(std::move(sec));
            continue;
        }
        const std::size_t eq = view.find('=');
        if (eq != std::string_view::npos) {
            const std::string key(trim(view.substr(0, eq)));
            const std::string value(trim(view.substr(eq + 1)));
            const int col = static_cast<int>(eq) + 2;
            if (in_meta) {
                meta[key] = {value, col};
            } else if (!sections.empty() && key == "count") {
                sections.back().count = parse_number<std::size_t>(value, line_no, col, "count");
            } else {
                throw ParseError(line_no, 1, "unexpected key '" + key + "'");
            }
            continue;
        }
        if (in_meta || sections.empty()) {
            throw ParseError(line_no, 1, "probability row outside a table section");
        }
        if (sections.back().row) {
            throw ParseError(line_no, 1, "section already has a probability row");
        }
        std::vector<double> values;
        for (const auto& [field, col] : split_fields(view, ' ')) {
            values.push_back(parse_number<double>(field, line_no, col, "probability"));
        }
        sections.back().row = std::move(values);
    }

    auto meta_int = [&](const char* key) {
        const auto it = meta.find(key);
        if (it == meta.end()) {
            throw ParseError(line_no + 1, 1, std::string("[meta] is missing ") + key);
        }
        return parse_number<long long>(it->second.first, line_no, it->second.second, key);
    };
    const int nu = static_cast<int>(meta_int("arity_u"));
    const int na = static_cast<int>(meta_int("arity_a"));
    const int nds = static_cast<int>(meta_int("arity_ds"));
    if (nu < 1 || na < 1 || nds < 1) {
        throw ParseError(line_no + 1, 1, "arities must be positive");
    }

    LearnedParams p;
    p.n = static_cast<std::size_t>(meta_int("n"));
    p.seed = static_cast<std::uint64_t>(meta_int("seed"));
    if (const auto it = meta.find("smoothing"); it != meta.end()) {
        p.smoothing = parse_number<double>(it->second.first, line_no, it->second.second, "smoothing");
    }
    if (const auto it = meta.find("model"); it != meta.end()) {
        p.model_id = it->second.first;
    }

    std::optional<std::vector<double>> pu;
    std::vector<std::optional<std::vector<double>>> puc(static_cast<std::size_t>(na) * nu);
    std::vector<std::optional<std::vector<double>>> p0(na);
    p.counts_uc.assign(puc.size(), 0);
    p.counts_0.assign(p0.size(), 0);
    for (Section& sec : sections) {
        if (!sec.row) {
            throw ParseError(sec.line, 1, "section has no probability row");
        }
        const std::size_t expected = sec.kind == "p_u" ? nu : nds;
        if (sec.row->size() != expected) {
            throw ParseError(sec.line, 1, "row has " + std::to_string(sec.row->size()) + " entries, expected " +
                                              std::to_string(expected));
        }
        std::optional<std::vector<double>>* slot = nullptr;
        if (sec.kind == "p_u") {
            slot = &pu;
            p.counts_u = {sec.count};
        } else if (sec.kind == "p_uc") {
            if (sec.a < 0 || sec.a >= na || sec.u < 0 || sec.u >= nu) {
                throw ParseError(sec.line, 1, "p_uc index out of range");
            }
            const std::size_t i = static_cast<std::size_t>(sec.a) * nu + sec.u;
            slot = &puc[i];
            p.counts_uc[i] = sec.count;
        } else {
            if (sec.a < 0 || sec.a >= na) {
                throw ParseError(sec.line, 1, "p_0 index out of range");
            }
            slot = &p0[sec.a];
            p.counts_0[sec.a] = sec.count;
        }
        if (*slot) {
            throw ParseError(sec.line, 1, "duplicate section");
        }
        *slot = std::move(sec.row);
    }
    if (!pu) {
        throw ParseError(line_no + 1, 1, "missing [p_u]");
    }
    std::vector<std::vector<double>> uc_rows;
    for (std::size_t i = 0; i < puc.size(); ++i) {
        if (!puc[i]) {
            throw ParseError(line_no + 1, 1,
                             "missing [p_uc a=" + std::to_string(i / nu) + " u=" + std::to_string(i % nu) + "]");
        }
        uc_rows.push_back(*puc[i]);
    }
    std::vector<std::vector<double>> zero_rows;
    for (int a = 0; a < na; ++a) {
        if (!p0[a]) {
            throw ParseError(line_no + 1, 1, "missing [p_0 a=" + std::to_string(a) + "]");
        }
        zero_rows.push_back(*p0[a]);
    }
    try {
        p.p_u = scm::CategoricalTable::root(*pu);
        p.p_uc = scm::CategoricalTable({na, nu}, uc_rows);
        p.p_0 = scm::CategoricalTable({na}, zero_rows);
    } catch (const SpecificationError& e) {
        throw ParseError(line_no, 1, e.what());
    }
    return p;
}

// ---------------------------------------------------------------------------
// Files

void save_dataset(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    write_dataset_csv(out, dataset);
    if (!out) {
        throw IoError("write to '" + path + "' failed");
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return read_dataset_csv(in);
}

void save_params(const std::string& path, const LearnedParams& params) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    write_params(out, params);
    if (!out) {
        throw IoError("write to '" + path + "' failed");
    }
}

LearnedParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return read_params(in);
}

}  // namespace cpomdp::learning
