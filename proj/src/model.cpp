#include "flowtrace/model.hpp"

#include "flowtrace/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

using json = nlohmann::json;

namespace flowtrace {

namespace {

constexpr double kPsdTolRel = 1e-8;   // eigenvalue >= -tol * spectral norm
constexpr double kSymTolRel = 1e-9;   // allowed asymmetry before rejection

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

Matrix checked_symmetric_psd(const Matrix& m, const std::string& name) {
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    require(asym <= kSymTolRel * scale, name + " is not symmetric");
    Matrix sym = symmetrize(m);
    if (!is_psd(sym, kPsdTolRel)) {
        throw ValidationError(name + " is not positive semidefinite (min eigenvalue "
                              + std::to_string(min_eigenvalue_sym(sym)) + ")");
    }
    return sym;
}

} // namespace

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "none";
        case AttackKind::fdi: return "fdi";
        case AttackKind::zero_dynamics: return "zero_dynamics";
        case AttackKind::replay: return "replay";
    }
    return "none";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "none") return AttackKind::none;
    if (s == "fdi") return AttackKind::fdi;
    if (s == "zero_dynamics") return AttackKind::zero_dynamics;
    if (s == "replay") return AttackKind::replay;
    throw ParseError("scenario.attack_kind.kind: unknown kind '" + s + "'");
}

std::string to_string(DetectorSpec::Kind kind) {
    return kind == DetectorSpec::Kind::chi_squared ? "chi2" : "np";
}

SystemModel validate_model(const SystemModel& model) {
    const int n = static_cast<int>(model.A.rows());
    require(n >= 1, "A must be nonempty");
    require(model.A.cols() == n, "A must be square");
    require(model.B.rows() == n, "B row count must match A");
    require(model.B.cols() >= 1, "B must have at least one column");
    require(model.C.cols() == n, "C column count must match A");
    require(model.C.rows() >= 1, "C must have at least one row");
    const int m = static_cast<int>(model.C.rows());
    require(model.Q.rows() == n && model.Q.cols() == n, "Q must be n x n");
    require(model.R.rows() == m && model.R.cols() == m, "R must be m x m");
    require(model.x0_mean.size() == n, "x0_mean must have length n");
    require(model.x0_cov.rows() == n && model.x0_cov.cols() == n, "x0_cov must be n x n");

    SystemModel out = model;
    out.Q = checked_symmetric_psd(model.Q, "Q");
    out.R = checked_symmetric_psd(model.R, "R");
    out.x0_cov = checked_symmetric_psd(model.x0_cov, "x0_cov");

    // R must be PD so the innovation covariance C P C^T + R stays invertible.
    const double rmin = min_eigenvalue_sym(out.R);
    const double rnorm = std::max(out.R.cwiseAbs().maxCoeff(), 1e-300);
    if (rmin <= kPsdTolRel * rnorm) {
        throw ValidationError("R is singular (min eigenvalue " + std::to_string(rmin) + ")");
    }
    return out;
}

AttackChannels validate_channels(const AttackChannels& channels, int n, int m) {
    if (channels.Ba.size() > 0 || channels.p_prime() > 0) {
        require(channels.Ba.rows() == n, "Ba row count must match the state dimension");
    }
    if (channels.p_prime() > 0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(channels.Ba);
        qr.setThreshold(1e-10);
        require(qr.rank() == channels.p_prime(), "Ba must have full column rank");
    }
    int prev = 0;
    for (int s : channels.sensors) {
        require(s >= 1 && s <= m, "sensor index " + std::to_string(s) + " out of range 1.."
                                      + std::to_string(m));
        require(s > prev, "sensor indices must be strictly increasing");
        prev = s;
    }
    return channels;
}

void validate_scenario(const ScenarioConfig& scenario, const SystemModel& model,
                       const AttackChannels& channels) {
    require(scenario.horizon >= 1, "scenario.horizon must be >= 1");
    require(scenario.trials >= 1, "scenario.trials must be >= 1");
    if (scenario.watermark_cov) {
        const Matrix& q = *scenario.watermark_cov;
        require(q.rows() == model.p() && q.cols() == model.p(),
                "watermark_cov must be p x p");
        checked_symmetric_psd(q, "watermark_cov");
    }
    if (scenario.detector.delta) {
        const double d = *scenario.detector.delta;
        require(d > 0.0 && d < 1.0, "detector.delta must lie in (0, 1)");
    }
    require(scenario.detector.window >= 1, "detector.window must be >= 1");
    if (scenario.fdi.ua_const.size() > 0) {
        require(scenario.fdi.ua_const.size() == channels.p_prime(),
                "attack_kind.ua must have length p'");
    }
    if (scenario.fdi.da_const.size() > 0) {
        require(scenario.fdi.da_const.size() == channels.m_prime(),
                "attack_kind.da must have length m'");
    }
}

Matrix build_Da(const AttackChannels& channels, int m) {
    Matrix da = Matrix::Zero(m, channels.m_prime());
    for (int v = 0; v < channels.m_prime(); ++v) {
        const int u = channels.sensors[static_cast<size_t>(v)];
        if (u < 1 || u > m) {
            throw ValidationError("sensor index " + std::to_string(u) + " out of range 1.."
                                  + std::to_string(m));
        }
        da(u - 1, v) = 1.0;
    }
    return da;
}

// ---------------------------------------------------------------------------
// JSON document handling
// ---------------------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw ParseError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

const json& get_field(const json& j, const std::string& key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(where + ": missing field '" + key + "'");
    return *it;
}

Matrix parse_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ParseError(where + ": expected a nonempty nested array");
    const size_t rows = j.size();
    size_t cols = 0;
    if (!j[0].is_array()) throw ParseError(where + ": expected a nested array of numbers");
    cols = j[0].size();
    if (cols == 0) throw ParseError(where + ": rows must be nonempty");
    Matrix out(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) {
            throw ParseError(where + ": row " + std::to_string(r) + " has inconsistent length");
        }
        for (size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw ParseError(where + ": entries must be numbers");
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j[r][c].get<double>();
        }
    }
    return out;
}

Matrix parse_matrix_shaped(const json& j, int rows, int cols, const std::string& where) {
    Matrix m = parse_matrix(j, where);
    if (m.rows() != rows || m.cols() != cols) {
        throw ParseError(where + ": expected shape " + std::to_string(rows) + "x"
                         + std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x"
                         + std::to_string(m.cols()));
    }
    return m;
}

Vector parse_vector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
    Vector out(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(where + ": entries must be numbers");
        out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return out;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

FdiConfig parse_fdi_config(const json& j, const std::string& where) {
    reject_unknown_keys(j, {"kind", "ua", "da", "epsilon", "direction"}, where);
    FdiConfig out;
    if (j.contains("ua")) out.ua_const = parse_vector(j["ua"], where + ".ua");
    if (j.contains("da")) out.da_const = parse_vector(j["da"], where + ".da");
    if (j.contains("epsilon")) {
        if (!j["epsilon"].is_number()) throw ParseError(where + ".epsilon: expected a number");
        out.epsilon = j["epsilon"].get<double>();
    }
    if (j.contains("direction")) out.direction = parse_vector(j["direction"], where + ".direction");
    return out;
}

DetectorSpec parse_detector(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    reject_unknown_keys(j, {"kind", "window", "delta", "threshold"}, where);
    DetectorSpec out;
    const std::string kind = get_field(j, "kind", where).get<std::string>();
    if (kind == "chi2") {
        out.kind = DetectorSpec::Kind::chi_squared;
    } else if (kind == "np") {
        out.kind = DetectorSpec::Kind::neyman_pearson;
    } else {
        throw ParseError(where + ".kind: unknown detector '" + kind + "'");
    }
    if (j.contains("window")) out.window = j["window"].get<int>();
    if (j.contains("delta")) out.delta = j["delta"].get<double>();
    if (j.contains("threshold")) out.threshold = j["threshold"].get<double>();
    return out;
}

} // namespace

ModelFile parse_model(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model document: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("model document: expected a JSON object");
    reject_unknown_keys(doc, {"system", "attack", "scenario"}, "model document");

    ModelFile out;

    const json& sys = get_field(doc, "system", "model document");
    reject_unknown_keys(sys, {"A", "B", "C", "Q", "R", "x0_mean", "x0_cov"}, "system");
    out.system.A = parse_matrix(get_field(sys, "A", "system"), "system.A");
    const int n = static_cast<int>(out.system.A.rows());
    if (out.system.A.cols() != n) throw ParseError("system.A: must be square");
    out.system.B = parse_matrix(get_field(sys, "B", "system"), "system.B");
    if (out.system.B.rows() != n) throw ParseError("system.B: row count must match A");
    out.system.C = parse_matrix(get_field(sys, "C", "system"), "system.C");
    if (out.system.C.cols() != n) throw ParseError("system.C: column count must match A");
    const int m = static_cast<int>(out.system.C.rows());
    out.system.Q = parse_matrix_shaped(get_field(sys, "Q", "system"), n, n, "system.Q");
    out.system.R = parse_matrix_shaped(get_field(sys, "R", "system"), m, m, "system.R");
    out.system.x0_mean = parse_vector(get_field(sys, "x0_mean", "system"), "system.x0_mean");
    out.system.x0_cov = parse_matrix_shaped(get_field(sys, "x0_cov", "system"), n, n,
                                            "system.x0_cov");
    out.system = validate_model(out.system);

    const json& att = get_field(doc, "attack", "model document");
    reject_unknown_keys(att, {"Ba", "sensors"}, "attack");
    if (att.contains("Ba") && !att["Ba"].empty()) {
        out.attack.Ba = parse_matrix(att["Ba"], "attack.Ba");
    } else {
        out.attack.Ba = Matrix::Zero(n, 0);
    }
    if (att.contains("sensors")) {
        for (const auto& s : att["sensors"]) {
            if (!s.is_number_integer()) throw ParseError("attack.sensors: expected integers");
            out.attack.sensors.push_back(s.get<int>());
        }
    }
    out.attack = validate_channels(out.attack, n, m);

    const json& sc = get_field(doc, "scenario", "model document");
    reject_unknown_keys(sc, {"horizon", "trials", "seed", "attack_kind", "watermark_cov",
                             "detector"},
                        "scenario");
    out.scenario.horizon = get_field(sc, "horizon", "scenario").get<int>();
    out.scenario.trials = get_field(sc, "trials", "scenario").get<int>();
    out.scenario.seed = get_field(sc, "seed", "scenario").get<std::uint64_t>();
    const json& ak = get_field(sc, "attack_kind", "scenario");
    if (!ak.is_object()) throw ParseError("scenario.attack_kind: expected an object");
    const std::string kind =
        get_field(ak, "kind", "scenario.attack_kind").get<std::string>();
    out.scenario.attack_kind = attack_kind_from_string(kind);
    switch (out.scenario.attack_kind) {
        case AttackKind::fdi:
            out.scenario.fdi = parse_fdi_config(ak, "scenario.attack_kind");
            break;
        case AttackKind::zero_dynamics:
            reject_unknown_keys(ak, {"kind", "scale"}, "scenario.attack_kind");
            if (ak.contains("scale")) out.scenario.zero_dynamics.scale = ak["scale"].get<double>();
            break;
        default:
            reject_unknown_keys(ak, {"kind"}, "scenario.attack_kind");
            break;
    }
    if (sc.contains("watermark_cov")) {
        out.scenario.watermark_cov =
            parse_matrix(sc["watermark_cov"], "scenario.watermark_cov");
    }
    out.scenario.detector = parse_detector(get_field(sc, "detector", "scenario"),
                                           "scenario.detector");
    validate_scenario(out.scenario, out.system, out.attack);
    return out;
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open model file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

std::string save_model(const ModelFile& file) {
    json doc;
    doc["system"] = {
        {"A", matrix_to_json(file.system.A)},   {"B", matrix_to_json(file.system.B)},
        {"C", matrix_to_json(file.system.C)},   {"Q", matrix_to_json(file.system.Q)},
        {"R", matrix_to_json(file.system.R)},   {"x0_mean", vector_to_json(file.system.x0_mean)},
        {"x0_cov", matrix_to_json(file.system.x0_cov)},
    };
    doc["attack"] = {
        {"Ba", matrix_to_json(file.attack.Ba)},
        {"sensors", file.attack.sensors},
    };
    json ak;
    ak["kind"] = to_string(file.scenario.attack_kind);
    if (file.scenario.attack_kind == AttackKind::fdi) {
        if (file.scenario.fdi.ua_const.size() > 0) ak["ua"] = vector_to_json(file.scenario.fdi.ua_const);
        if (file.scenario.fdi.da_const.size() > 0) ak["da"] = vector_to_json(file.scenario.fdi.da_const);
        if (file.scenario.fdi.epsilon) ak["epsilon"] = *file.scenario.fdi.epsilon;
        if (file.scenario.fdi.direction.size() > 0) ak["direction"] = vector_to_json(file.scenario.fdi.direction);
    } else if (file.scenario.attack_kind == AttackKind::zero_dynamics) {
        ak["scale"] = file.scenario.zero_dynamics.scale;
    }
    json det;
    det["kind"] = to_string(file.scenario.detector.kind);
    det["window"] = file.scenario.detector.window;
    if (file.scenario.detector.delta) det["delta"] = *file.scenario.detector.delta;
    if (file.scenario.detector.threshold) det["threshold"] = *file.scenario.detector.threshold;
    doc["scenario"] = {
        {"horizon", file.scenario.horizon},
        {"trials", file.scenario.trials},
        {"seed", file.scenario.seed},
        {"attack_kind", ak},
        {"detector", det},
    };
    if (file.scenario.watermark_cov) {
        doc["scenario"]["watermark_cov"] = matrix_to_json(*file.scenario.watermark_cov);
    }
    return doc.dump(2) + "\n";
}

void save_model_file(const ModelFile& file, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write model file: " + path);
    out << save_model(file);
}

} // namespace flowtrace
