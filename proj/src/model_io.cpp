#include "spamm/model_io.hpp"

#include <fstream>
#include <sstream>

namespace spamm {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd json_vec(const json& a, const char* what) {
    if (!a.is_array()) throw ContractError(std::string("model json: '") + what + "' must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw ContractError(std::string("model json: '") + what + "' must hold numbers");
        v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    }
    return v;
}

const json& field(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ContractError(std::string("model json: missing field '") + key + "'");
    return *it;
}

}  // namespace

json model_to_json(const SparseMixtureModel& model) {
    json comps = json::array();
    for (const auto& c : model.components()) {
        json jc;
        jc["u"] = c.u;
        jc["alpha"] = c.alpha;
        jc["family"] = std::string(family_name(c.family));
        if (c.family != Family::Uniform) jc["mean"] = vec_json(c.mean);
        switch (c.family) {
            case Family::WrappedFull: {
                json rows = json::array();
                for (Eigen::Index i = 0; i < c.cov.rows(); ++i) rows.push_back(vec_json(c.cov.row(i).transpose()));
                jc["cov"] = rows;
                break;
            }
            case Family::WrappedDiag: jc["var"] = vec_json(c.var); break;
            case Family::VonMises: jc["kappa"] = vec_json(c.kappa); break;
            case Family::Uniform: break;
        }
        comps.push_back(jc);
    }
    return json{{"d", model.dim()}, {"B", model.truncation_B()}, {"components", comps}};
}

SparseMixtureModel model_from_json(const json& j) {
    if (!j.is_object()) throw ContractError("model json: top level must be an object");
    const int d = field(j, "d").get<int>();
    const int B = field(j, "B").get<int>();
    const json& arr = field(j, "components");
    if (!arr.is_array()) throw ContractError("model json: 'components' must be an array");
    std::vector<MixtureComponent> comps;
    for (const auto& jc : arr) {
        MixtureComponent c;
        c.family = parse_family(field(jc, "family").get<std::string>());
        c.alpha = field(jc, "alpha").get<double>();
        c.u = field(jc, "u").get<IndexSet>();
        if (c.family != Family::Uniform) c.mean = json_vec(field(jc, "mean"), "mean");
        switch (c.family) {
            case Family::WrappedFull: {
                const json& rows = field(jc, "cov");
                if (!rows.is_array()) throw ContractError("model json: 'cov' must be a matrix");
                const auto n = static_cast<Eigen::Index>(rows.size());
                c.cov.resize(n, n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const Eigen::VectorXd r = json_vec(rows[static_cast<std::size_t>(i)], "cov");
                    if (r.size() != n) throw ContractError("model json: 'cov' must be square");
                    c.cov.row(i) = r.transpose();
                }
                break;
            }
            case Family::WrappedDiag: c.var = json_vec(field(jc, "var"), "var"); break;
            case Family::VonMises: c.kappa = json_vec(field(jc, "kappa"), "kappa"); break;
            case Family::Uniform: break;
        }
        comps.push_back(std::move(c));
    }
    return SparseMixtureModel(d, std::move(comps), B);
}

std::string dump_model(const SparseMixtureModel& model) {
    return model_to_json(model).dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ContractError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) throw ContractError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ContractError("cannot move output into place at '" + path.string() + "': " + ec.message());
    }
}

void save_model(const SparseMixtureModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, dump_model(model));
}

SparseMixtureModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("cannot open model file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ContractError("model file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const json::exception& e) {
        throw ContractError(std::string("model json: ") + e.what());
    }
}

}  // namespace spamm
