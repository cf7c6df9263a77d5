#include "relunlearn/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "file_io.hpp"
#include "relunlearn/error.hpp"

namespace relunlearn {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

ordered_json to_json(const Evaluation& e) {
    ordered_json forgetting = ordered_json::array();
    for (const auto& a : e.forgetting.attacks) {
        ordered_json tiers = ordered_json::array();
        for (const auto& t : a.tiers) {
            tiers.push_back({{"tier", to_string(t.tier)},
                             {"base_cos", t.base_cos},
                             {"optimal_cos", t.optimal_cos},
                             {"delta_cos", t.delta_cos},
                             {"pairs", t.pairs}});
        }
        forgetting.push_back({{"attack", to_string(a.attack_type)},
                              {"base_cos", a.base_cos},
                              {"optimal_cos", a.optimal_cos},
                              {"delta_cos", a.delta_cos},
                              {"tiers", std::move(tiers)}});
    }
    ordered_json preservation = ordered_json::array();
    for (const auto& r : e.preservation.rows) {
        preservation.push_back({{"case", to_string(r.preservation_case)},
                                {"base_cos", r.base_cos},
                                {"optimal_cos", r.optimal_cos},
                                {"abs_drift", r.abs_drift},
                                {"pairs", r.pairs}});
    }
    return {{"forgetting", std::move(forgetting)},
            {"preservation", std::move(preservation)},
            {"mean_drift", e.preservation.rows.empty() ? 0.0 : e.preservation.mean_drift()},
            {"anchor_drift", e.anchor_drift}};
}

[[noreturn]] void bad(const std::string& path, const std::string& msg) { throw ParseError(0, path, msg); }

const ordered_json& field(const ordered_json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) bad(path + "." + key, "missing field");
    return j.at(key);
}

double number(const ordered_json& j, const char* key, const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_number()) bad(path + "." + key, "expected a number");
    return v.get<double>();
}

std::size_t count(const ordered_json& j, const char* key, const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_number_unsigned()) bad(path + "." + key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

std::string text(const ordered_json& j, const char* key, const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_string()) bad(path + "." + key, "expected a string");
    return v.get<std::string>();
}

const ordered_json& array(const ordered_json& j, const char* key, const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_array()) bad(path + "." + key, "expected an array");
    return v;
}

Evaluation evaluation_from(const ordered_json& j, const std::string& path) {
    Evaluation e;
    const auto& forgetting = array(j, "forgetting", path);
    for (std::size_t i = 0; i < forgetting.size(); ++i) {
        const auto& a = forgetting[i];
        const std::string p = path + ".forgetting[" + std::to_string(i) + "]";
        AttackResult r;
        const auto type = parse_attack_type(text(a, "attack", p));
        if (!type) bad(p + ".attack", "unknown attack type");
        r.attack_type = *type;
        r.base_cos = number(a, "base_cos", p);
        r.optimal_cos = number(a, "optimal_cos", p);
        r.delta_cos = number(a, "delta_cos", p);
        const auto& tiers = array(a, "tiers", p);
        for (std::size_t k = 0; k < tiers.size(); ++k) {
            const std::string tp = p + ".tiers[" + std::to_string(k) + "]";
            const auto tier = parse_tier(text(tiers[k], "tier", tp));
            if (!tier) bad(tp + ".tier", "unknown tier");
            r.tiers.push_back({*tier, number(tiers[k], "base_cos", tp), number(tiers[k], "optimal_cos", tp),
                               number(tiers[k], "delta_cos", tp), count(tiers[k], "pairs", tp)});
        }
        e.forgetting.attacks.push_back(std::move(r));
    }
    const auto& preservation = array(j, "preservation", path);
    for (std::size_t i = 0; i < preservation.size(); ++i) {
        const auto& c = preservation[i];
        const std::string p = path + ".preservation[" + std::to_string(i) + "]";
        const auto pc = parse_preservation_case(text(c, "case", p));
        if (!pc) bad(p + ".case", "unknown preservation case");
        e.preservation.rows.push_back({*pc, number(c, "base_cos", p), number(c, "optimal_cos", p),
                                       number(c, "abs_drift", p), count(c, "pairs", p)});
    }
    e.anchor_drift = number(j, "anchor_drift", path);
    return e;
}

bool safe_name(std::string_view name) {
    if (name.empty()) return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
        if (!ok) return false;
    }
    return true;
}

}  // namespace

std::vector<ReportEntry> report_entries(const AblationReport& report) {
    std::vector<ReportEntry> out;
    for (const auto& v : report.variants) out.push_back({v.variant.name, v.evaluation, v.log.records});
    return out;
}

std::string report_json(const std::vector<ReportEntry>& entries) {
    ordered_json list = ordered_json::array();
    for (const auto& e : entries) {
        ordered_json j = {{"name", e.name}};
        j.update(to_json(e.evaluation));
        list.push_back(std::move(j));
    }
    ordered_json root = {{"format", "relunlearn-report"}, {"version", 1}, {"entries", std::move(list)}};
    return root.dump(2) + "\n";
}

std::vector<ReportEntry> parse_report(std::string_view body) {
    ordered_json root;
    try {
        root = ordered_json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, "", std::string("report is not valid JSON: ") + e.what());
    }
    if (text(root, "format", "$") != "relunlearn-report") bad("$.format", "not a relunlearn report");
    if (!field(root, "version", "$").is_number_integer() || root["version"].get<int>() != 1) {
        throw Error(ErrorCode::kVersionMismatch, "unsupported report version");
    }
    std::vector<ReportEntry> out;
    const auto& list = array(root, "entries", "$");
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = "$.entries[" + std::to_string(i) + "]";
        out.push_back({text(list[i], "name", p), evaluation_from(list[i], p), std::nullopt});
    }
    if (out.empty()) throw Error(ErrorCode::kEmptySet, "report has no entries");
    return out;
}

std::string forgetting_table(const ForgettingReport& report) {
    std::string out = "Attack\tBase Cosine\tOptimal Cosine\tΔcos (Forgetting)\n";
    for (const auto& a : report.attacks) {
        out += std::string(display_name(a.attack_type)) + "\t" + num(a.base_cos) + "\t" + num(a.optimal_cos) + "\t" +
               num(a.delta_cos) + "\n";
    }
    return out;
}

std::string forgetting_tier_table(const ForgettingReport& report) {
    std::string out = "Attack\tTier\tBase Cosine\tOptimal Cosine\tΔcos (Forgetting)\tPairs\n";
    for (const auto& a : report.attacks) {
        for (const auto& t : a.tiers) {
            out += std::string(display_name(a.attack_type)) + "\t" + std::string(to_string(t.tier)) + "\t" +
                   num(t.base_cos) + "\t" + num(t.optimal_cos) + "\t" + num(t.delta_cos) + "\t" +
                   std::to_string(t.pairs) + "\n";
        }
    }
    return out;
}

std::string preservation_table(const PreservationReport& report) {
    std::string out = "Preservation Case\tBase Cosine\tOptimal Cosine\tAbs. Drift (|Δcos|)\n";
    for (const auto& r : report.rows) {
        out += std::string(display_name(r.preservation_case)) + "\t" + num(r.base_cos) + "\t" + num(r.optimal_cos) +
               "\t" + num(r.abs_drift) + "\n";
    }
    return out;
}

std::string ablation_bars(const std::vector<ReportEntry>& entries) {
    std::string out = "variant";
    for (auto t : kAllAttacks) out += "\t" + std::string(to_string(t)) + "_delta_cos";
    out += "\tmean_preservation_drift\tanchor_drift\n";
    for (const auto& e : entries) {
        out += e.name;
        for (auto t : kAllAttacks) {
            const auto* a = e.evaluation.forgetting.find(t);
            out += "\t" + (a ? num(a->delta_cos) : std::string("nan"));
        }
        const double drift = e.evaluation.preservation.rows.empty() ? 0.0 : e.evaluation.preservation.mean_drift();
        out += "\t" + num(drift) + "\t" + num(e.evaluation.anchor_drift) + "\n";
    }
    return out;
}

std::string render_text(const std::vector<ReportEntry>& entries) {
    std::ostringstream os;
    char line[160];
    for (const auto& e : entries) {
        os << "== " << e.name << "\n";
        std::snprintf(line, sizeof(line), "%-26s %12s %15s %18s\n", "Attack Type", "Base Cosine", "Optimal Cosine",
                      "dcos (Forgetting)");
        os << line;
        for (const auto& a : e.evaluation.forgetting.attacks) {
            std::snprintf(line, sizeof(line), "%-26s %12s %15s %18s\n", std::string(display_name(a.attack_type)).c_str(),
                          fixed4(a.base_cos).c_str(), fixed4(a.optimal_cos).c_str(), fixed4(a.delta_cos).c_str());
            os << line;
        }
        std::snprintf(line, sizeof(line), "%-26s %12s %15s %18s\n", "Preservation Case", "Base Cosine",
                      "Optimal Cosine", "Abs. Drift");
        os << line;
        for (const auto& r : e.evaluation.preservation.rows) {
            std::snprintf(line, sizeof(line), "%-26s %12s %15s %18s\n",
                          std::string(display_name(r.preservation_case)).c_str(), fixed4(r.base_cos).c_str(),
                          fixed4(r.optimal_cos).c_str(), fixed4(r.abs_drift).c_str());
            os << line;
        }
        if (!e.evaluation.preservation.rows.empty()) {
            os << "mean drift " << fixed4(e.evaluation.preservation.mean_drift()) << ", anchor drift "
               << fixed4(e.evaluation.anchor_drift) << "\n";
        }
    }
    return os.str();
}

void write_file(const std::string& path, std::string_view content) { detail::write_bytes(path, content, "file"); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> emit_report(const std::vector<ReportEntry>& entries, const std::string& out_dir) {
    if (entries.empty()) throw Error(ErrorCode::kEmptySet, "no report entries to emit");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!safe_name(entries[i].name)) {
            throw Error(ErrorCode::kInvalidArgument, "report entry name '" + entries[i].name +
                                                         "' must be non-empty and use only letters, digits, '-' and '_'");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (entries[i].name == entries[j].name) {
                throw Error(ErrorCode::kInvalidArgument, "duplicate report entry '" + entries[i].name + "'");
            }
        }
    }
    const fs::path dir(out_dir);
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& content) {
        const std::string path = (dir / name).string();
        write_file(path, content);
        written.push_back(path);
    };
    put("report.json", report_json(entries));
    for (const auto& e : entries) {
        put(e.name + "_forgetting.tsv", forgetting_table(e.evaluation.forgetting));
        put(e.name + "_forgetting_tiers.tsv", forgetting_tier_table(e.evaluation.forgetting));
        put(e.name + "_preservation.tsv", preservation_table(e.evaluation.preservation));
        if (e.loss_curve) put(e.name + "_loss_curve.tsv", emit_loss_curve(*e.loss_curve));
    }
    put("ablation_bars.tsv", ablation_bars(entries));
    return written;
}

}  // namespace relunlearn
