#include "weaver/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "weaver/rng.hpp"

namespace weaver {

const char* to_string(VerifierKind kind) {
    return kind == VerifierKind::binary_judge ? "binary_judge" : "continuous_reward";
}

VerifierKind verifier_kind_from_string(const std::string& s) {
    if (s == "continuous_reward") return VerifierKind::continuous_reward;
    if (s == "binary_judge") return VerifierKind::binary_judge;
    fail("unknown verifier kind: " + s);
}

namespace {

struct RawRecord {
    std::string query_id;
    int response_index = -1;
    std::vector<double> scores;  // manifest order
    int label = -1;              // -1 = absent
    bool has_answer = false;
    std::string answer;
};

std::vector<VerifierMeta> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open manifest: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        fail("manifest parse error: " + std::string(e.what()));
    }
    if (!doc.contains("verifiers") || !doc["verifiers"].is_array() || doc["verifiers"].empty())
        fail("manifest missing non-empty 'verifiers' array");
    std::vector<VerifierMeta> out;
    for (const auto& v : doc["verifiers"]) {
        VerifierMeta meta;
        if (!v.contains("id") || !v["id"].is_string()) fail("manifest verifier missing id");
        meta.id = v["id"].get<std::string>();
        if (!v.contains("kind")) fail("manifest verifier missing kind: " + meta.id);
        meta.kind = verifier_kind_from_string(v["kind"].get<std::string>());
        if (v.contains("notes")) meta.notes = v["notes"].get<std::string>();
        out.push_back(std::move(meta));
    }
    for (std::size_t a = 0; a < out.size(); ++a)
        for (std::size_t b = a + 1; b < out.size(); ++b)
            if (out[a].id == out[b].id) fail("duplicate verifier id in manifest: " + out[a].id);
    return out;
}

double parse_score(const json& v, const std::string& verifier_id) {
    if (!v.is_number()) fail("non-finite score for verifier " + verifier_id);
    double d = v.get<double>();
    if (!std::isfinite(d)) fail("non-finite score for verifier " + verifier_id);
    return d;
}

std::vector<RawRecord> read_jsonl(const std::string& path, const std::vector<VerifierMeta>& verifiers) {
    std::ifstream in(path);
    if (!in) fail("cannot open dataset: " + path);
    std::vector<RawRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const std::exception& e) {
            fail("line " + std::to_string(lineno) + ": JSON parse error: " + e.what());
        }
        RawRecord r;
        if (!rec.contains("query_id") || !rec["query_id"].is_string())
            fail("line " + std::to_string(lineno) + ": missing field 'query_id'");
        r.query_id = rec["query_id"].get<std::string>();
        if (!rec.contains("response_index") || !rec["response_index"].is_number_integer())
            fail("line " + std::to_string(lineno) + ": missing field 'response_index'");
        r.response_index = rec["response_index"].get<int>();
        if (r.response_index < 0)
            fail("line " + std::to_string(lineno) + ": negative response_index");
        if (!rec.contains("scores") || !rec["scores"].is_object())
            fail("line " + std::to_string(lineno) + ": missing field 'scores'");
        const auto& sc = rec["scores"];
        if (sc.size() != verifiers.size())
            fail("line " + std::to_string(lineno) + ": expected " +
                 std::to_string(verifiers.size()) + " scores, got " + std::to_string(sc.size()));
        r.scores.reserve(verifiers.size());
        for (const auto& meta : verifiers) {
            if (!sc.contains(meta.id))
                fail("line " + std::to_string(lineno) + ": missing score for verifier " + meta.id);
            r.scores.push_back(parse_score(sc[meta.id], meta.id));
        }
        if (rec.contains("label") && !rec["label"].is_null()) {
            if (!rec["label"].is_number_integer())
                fail("line " + std::to_string(lineno) + ": label must be 0 or 1");
            int lab = rec["label"].get<int>();
            if (lab != 0 && lab != 1)
                fail("line " + std::to_string(lineno) + ": label must be 0 or 1");
            r.label = lab;
        }
        if (rec.contains("answer") && !rec["answer"].is_null()) {
            if (!rec["answer"].is_string())
                fail("line " + std::to_string(lineno) + ": answer must be a string");
            r.has_answer = true;
            r.answer = rec["answer"].get<std::string>();
        }
        records.push_back(std::move(r));
    }
    return records;
}

// Minimal RFC4180-style row splitter. Quoted fields may contain commas and
// doubled quotes; embedded newlines are not supported.
std::vector<std::string> split_csv_row(const std::string& line, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) fail("line " + std::to_string(lineno) + ": unterminated quote");
    fields.push_back(cur);
    return fields;
}

std::vector<RawRecord> read_csv(const std::string& path, const std::vector<VerifierMeta>& verifiers) {
    std::ifstream in(path);
    if (!in) fail("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) fail("empty CSV file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_row(line, 1);
    if (header.size() != 4 + verifiers.size() || header[0] != "query_id" ||
        header[1] != "response_index" || header[2] != "label" || header[3] != "answer")
        fail("CSV header must be query_id,response_index,label,answer,<verifier ids>");
    for (std::size_t k = 0; k < verifiers.size(); ++k)
        if (header[4 + k] != verifiers[k].id)
            fail("CSV verifier column '" + header[4 + k] + "' does not match manifest order (" +
                 verifiers[k].id + ")");

    std::vector<RawRecord> records;
    std::size_t lineno = 1;
    bool any_answer = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_csv_row(line, lineno);
        if (f.size() != header.size())
            fail("line " + std::to_string(lineno) + ": expected " +
                 std::to_string(header.size()) + " columns, got " + std::to_string(f.size()));
        RawRecord r;
        r.query_id = f[0];
        if (r.query_id.empty()) fail("line " + std::to_string(lineno) + ": missing field 'query_id'");
        try {
            std::size_t pos = 0;
            r.response_index = std::stoi(f[1], &pos);
            if (pos != f[1].size()) throw std::invalid_argument(f[1]);
        } catch (const std::exception&) {
            fail("line " + std::to_string(lineno) + ": bad response_index '" + f[1] + "'");
        }
        if (r.response_index < 0) fail("line " + std::to_string(lineno) + ": negative response_index");
        if (!f[2].empty()) {
            if (f[2] != "0" && f[2] != "1")
                fail("line " + std::to_string(lineno) + ": label must be 0 or 1");
            r.label = f[2][0] - '0';
        }
        if (!f[3].empty()) {
            r.has_answer = true;
            r.answer = f[3];
            any_answer = true;
        }
        for (std::size_t k = 0; k < verifiers.size(); ++k) {
            const std::string& cell = f[4 + k];
            if (cell.empty())
                fail("line " + std::to_string(lineno) + ": missing score for verifier " +
                     verifiers[k].id);
            char* end = nullptr;
            double d = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size() || !std::isfinite(d))
                fail("non-finite score for verifier " + verifiers[k].id + " (line " +
                     std::to_string(lineno) + ")");
            r.scores.push_back(d);
        }
        records.push_back(std::move(r));
    }
    // CSV always has an answer column; treat all-empty as "no answers" and
    // otherwise surface empty cells as empty-string answers.
    if (any_answer)
        for (auto& r : records) r.has_answer = true;
    return records;
}

DatasetBundle assemble(std::vector<RawRecord> records, std::vector<VerifierMeta> verifiers,
                       const std::string& source_path) {
    if (records.empty()) fail("dataset has no records");

    std::map<std::string, std::vector<const RawRecord*>> by_query;
    for (const auto& r : records) by_query[r.query_id].push_back(&r);

    const int K = static_cast<int>(by_query.begin()->second.size());
    for (auto& [qid, rows] : by_query) {
        if (static_cast<int>(rows.size()) != K)
            fail("ragged K: query " + qid + " has " + std::to_string(rows.size()) +
                 " responses, expected " + std::to_string(K));
        std::sort(rows.begin(), rows.end(),
                  [](const RawRecord* a, const RawRecord* b) {
                      return a->response_index < b->response_index;
                  });
        for (int j = 1; j < K; ++j)
            if (rows[j]->response_index == rows[j - 1]->response_index)
                fail("duplicate (query_id, response_index): (" + qid + ", " +
                     std::to_string(rows[j]->response_index) + ")");
        for (int j = 0; j < K; ++j)
            if (rows[j]->response_index != j)
                fail("query " + qid + ": response indices must cover 0.." + std::to_string(K - 1) +
                     " exactly (found " + std::to_string(rows[j]->response_index) + ")");
    }

    DatasetBundle b;
    b.source_path = source_path;
    b.scores.n = static_cast<int>(by_query.size());
    b.scores.K = K;
    b.scores.m = static_cast<int>(verifiers.size());
    b.scores.verifiers = std::move(verifiers);
    b.scores.scores.resize(static_cast<std::size_t>(b.scores.n) * K * b.scores.m);

    std::size_t labeled = 0, answered = 0;
    for (const auto& [qid, rows] : by_query) {
        (void)rows;
        b.query_ids.push_back(qid);
    }
    const std::size_t total = static_cast<std::size_t>(b.scores.n) * K;
    for (const auto& r : records) {
        if (r.label >= 0) ++labeled;
        if (r.has_answer) ++answered;
    }
    if (labeled != 0 && labeled != total) fail("partial labels: label must be set on all records or none");
    if (answered != 0 && answered != total) fail("partial answers: answer must be set on all records or none");
    if (labeled) b.labels.labels.resize(total);
    if (answered) b.labels.answers.resize(total);

    int i = 0;
    for (auto& [qid, rows] : by_query) {
        (void)qid;
        for (int j = 0; j < K; ++j) {
            const RawRecord& r = *rows[j];
            for (int k = 0; k < b.scores.m; ++k) b.scores.at(i, j, k) = r.scores[k];
            if (labeled) b.labels.labels[static_cast<std::size_t>(i) * K + j] = static_cast<std::uint8_t>(r.label);
            if (answered) b.labels.answers[static_cast<std::size_t>(i) * K + j] = r.answer;
        }
        ++i;
    }
    b.dataset_hash = canonical_hash(b);
    return b;
}

}  // namespace

DatasetBundle load_dataset(const std::string& path, const std::string& manifest_path,
                           DatasetFormat format) {
    auto verifiers = load_manifest(manifest_path);
    auto records = format == DatasetFormat::jsonl ? read_jsonl(path, verifiers)
                                                  : read_csv(path, verifiers);
    return assemble(std::move(records), std::move(verifiers), path);
}

void save_bundle(const DatasetBundle& bundle, const std::string& data_path,
                 const std::string& manifest_path) {
    {
        json manifest;
        manifest["verifiers"] = json::array();
        for (const auto& v : bundle.scores.verifiers) {
            json e;
            e["id"] = v.id;
            e["kind"] = to_string(v.kind);
            if (!v.notes.empty()) e["notes"] = v.notes;
            manifest["verifiers"].push_back(e);
        }
        std::ofstream out(manifest_path);
        if (!out) fail("cannot write manifest: " + manifest_path);
        out << manifest.dump(2) << "\n";
    }
    std::ofstream out(data_path);
    if (!out) fail("cannot write dataset: " + data_path);
    const int K = bundle.K(), m = bundle.m();
    for (int i = 0; i < bundle.n(); ++i) {
        for (int j = 0; j < K; ++j) {
            json rec;
            rec["query_id"] = bundle.query_ids[i];
            rec["response_index"] = j;
            json sc;
            for (int k = 0; k < m; ++k) sc[bundle.scores.verifiers[k].id] = bundle.scores.at(i, j, k);
            rec["scores"] = sc;
            if (bundle.labels.has_labels())
                rec["label"] = static_cast<int>(bundle.labels.label(i, j, K));
            if (bundle.labels.has_answers())
                rec["answer"] = bundle.labels.answers[static_cast<std::size_t>(i) * K + j];
            out << rec.dump() << "\n";
        }
    }
}

std::string canonical_hash(const DatasetBundle& bundle) {
    Fnv1a h;
    h.update_u64(static_cast<std::uint64_t>(bundle.n()));
    h.update_u64(static_cast<std::uint64_t>(bundle.K()));
    h.update_u64(static_cast<std::uint64_t>(bundle.m()));
    for (const auto& v : bundle.scores.verifiers) {
        h.update(v.id);
        h.update(std::string(1, '\x1f'));
        h.update(std::string(to_string(v.kind)));
        h.update(std::string(1, '\x1e'));
    }
    for (const auto& q : bundle.query_ids) {
        h.update(q);
        h.update(std::string(1, '\x1e'));
    }
    for (double s : bundle.scores.scores) h.update_double(s);
    h.update_u64(bundle.labels.has_labels() ? 1 : 0);
    if (bundle.labels.has_labels()) h.update(bundle.labels.labels.data(), bundle.labels.labels.size());
    h.update_u64(bundle.labels.has_answers() ? 1 : 0);
    if (bundle.labels.has_answers())
        for (const auto& a : bundle.labels.answers) {
            h.update_u64(a.size());
            h.update(a);
        }
    return h.hex();
}

json ValidationReport::to_json() const {
    json doc;
    doc["n"] = n;
    doc["K"] = K;
    doc["m"] = m;
    doc["has_labels"] = has_labels;
    doc["has_answers"] = has_answers;
    doc["per_verifier"] = json::array();
    for (const auto& s : per_verifier) {
        json row;
        row["id"] = s.id;
        row["min"] = s.min;
        row["max"] = s.max;
        row["mean"] = s.mean;
        row["variance"] = s.variance;
        row["degenerate"] = s.degenerate;
        doc["per_verifier"].push_back(row);
    }
    doc["degenerate_ids"] = degenerate_ids;
    return doc;
}

ValidationReport validate(const DatasetBundle& bundle) {
    ValidationReport rep;
    rep.n = bundle.n();
    rep.K = bundle.K();
    rep.m = bundle.m();
    rep.has_labels = bundle.labels.has_labels();
    rep.has_answers = bundle.labels.has_answers();
    const std::size_t rows = static_cast<std::size_t>(rep.n) * rep.K;
    for (int k = 0; k < rep.m; ++k) {
        VerifierColumnStats st;
        st.id = bundle.scores.verifiers[k].id;
        double mn = bundle.scores.scores[k], mx = mn, sum = 0.0, sumsq = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            double v = bundle.scores.scores[r * rep.m + k];
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            sum += v;
            sumsq += v * v;
        }
        st.min = mn;
        st.max = mx;
        st.mean = sum / static_cast<double>(rows);
        st.variance = std::max(0.0, sumsq / static_cast<double>(rows) - st.mean * st.mean);
        st.degenerate = (mn == mx);
        if (st.degenerate) rep.degenerate_ids.push_back(st.id);
        rep.per_verifier.push_back(std::move(st));
    }
    return rep;
}

std::vector<std::uint8_t> make_dev_mask(int n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) fail("dev fraction must be in (0, 1]");
    const int count = static_cast<int>(std::ceil(fraction * n));
    Rng rng(seed);
    auto picked = rng.sample_without_replacement(n, std::min(count, n));
    std::vector<std::uint8_t> mask(n, 0);
    for (int i : picked) mask[i] = 1;
    return mask;
}

void split_dev(DatasetBundle& bundle, double fraction, std::uint64_t seed) {
    if (!bundle.labels.has_labels()) fail("split_dev: no labels available");
    bundle.labels.dev_mask = make_dev_mask(bundle.n(), fraction, seed);
}

DatasetBundle subset_by_queries(const DatasetBundle& bundle, const std::vector<int>& query_idx) {
    DatasetBundle out;
    out.source_path = bundle.source_path;
    out.provenance = bundle.provenance;
    const int K = bundle.K(), m = bundle.m();
    out.scores.n = static_cast<int>(query_idx.size());
    out.scores.K = K;
    out.scores.m = m;
    out.scores.verifiers = bundle.scores.verifiers;
    out.scores.scores.resize(static_cast<std::size_t>(out.scores.n) * K * m);
    if (bundle.labels.has_labels()) out.labels.labels.resize(static_cast<std::size_t>(out.scores.n) * K);
    if (bundle.labels.has_answers()) out.labels.answers.resize(static_cast<std::size_t>(out.scores.n) * K);
    if (!bundle.labels.dev_mask.empty()) out.labels.dev_mask.resize(out.scores.n);
    for (int t = 0; t < out.scores.n; ++t) {
        int i = query_idx[t];
        if (i < 0 || i >= bundle.n()) fail("subset_by_queries: index out of range");
        out.query_ids.push_back(bundle.query_ids[i]);
        for (int j = 0; j < K; ++j) {
            for (int k = 0; k < m; ++k) out.scores.at(t, j, k) = bundle.scores.at(i, j, k);
            if (bundle.labels.has_labels())
                out.labels.labels[static_cast<std::size_t>(t) * K + j] = bundle.labels.label(i, j, K);
            if (bundle.labels.has_answers())
                out.labels.answers[static_cast<std::size_t>(t) * K + j] =
                    bundle.labels.answers[static_cast<std::size_t>(i) * K + j];
        }
        if (!bundle.labels.dev_mask.empty()) out.labels.dev_mask[t] = bundle.labels.dev_mask[i];
    }
    out.dataset_hash = canonical_hash(out);
    return out;
}

}  // namespace weaver
