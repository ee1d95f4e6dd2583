#include "bgis/models/checkpoint.hpp"

#include <fstream>

#include "bgis/models/egnn.hpp"

namespace bgis::models {

namespace {

nlohmann::json geometry_json(const Geometry& g) {
    return nlohmann::json{{"particles", g.particles}, {"space_dim", g.space_dim},
                          {"zero_cog", g.zero_cog}};
}

Geometry geometry_from(const nlohmann::json& j) {
    Geometry g;
    if (j.is_object()) {
        g.particles = j.value("particles", std::size_t{0});
        g.space_dim = j.value("space_dim", std::size_t{0});
        g.zero_cog = j.value("zero_cog", false);
    }
    return g;
}

nlohmann::json params_json(const Core& core) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Tensor* p : core.params()) {
        arr.push_back(std::vector<double>(p->data(), p->data() + p->size()));
    }
    return arr;
}

void load_params(Core& core, const nlohmann::json& arr) {
    std::vector<Tensor*> ps = core.params();
    if (!arr.is_array() || arr.size() != ps.size()) {
        throw ConfigError("checkpoint parameter count does not match architecture");
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto vals = arr[i].get<std::vector<double>>();
        if (vals.size() != ps[i]->size()) {
            throw ConfigError("checkpoint parameter " + std::to_string(i) + " has " +
                              std::to_string(vals.size()) + " values, expected " +
                              std::to_string(ps[i]->size()));
        }
        for (std::size_t k = 0; k < vals.size(); ++k) (*ps[i])[k] = vals[k];
    }
}

nlohmann::json base_doc(const std::string& kind, const Core& core, double sigma_data,
                        const Geometry& geo, const nlohmann::json& meta) {
    return nlohmann::json{{"kind", kind},
                          {"sigma_data", sigma_data},
                          {"geometry", geometry_json(geo)},
                          {"arch", core.arch_json()},
                          {"params", params_json(core)},
                          {"meta", meta}};
}

}  // namespace

std::unique_ptr<Core> core_from_json(const nlohmann::json& arch) {
    const std::string type = arch.value("type", "");
    if (type == "mlp") {
        return std::make_unique<MlpCore>(arch.at("x_dim").get<std::size_t>(),
                                         arch.at("hidden").get<std::vector<std::size_t>>(),
                                         arch.at("cond_s").get<bool>());
    }
    if (type == "egnn") {
        Geometry g{arch.at("particles").get<std::size_t>(),
                   arch.at("space_dim").get<std::size_t>(), true};
        return std::make_unique<EgnnCore>(g, arch.at("hidden").get<std::size_t>(),
                                          arch.at("layers").get<std::size_t>(),
                                          arch.at("cond_s").get<bool>());
    }
    throw ConfigError("unknown core type '" + type + "'");
}

nlohmann::json checkpoint_json(const NetDenoiser& model, const nlohmann::json& meta) {
    return base_doc("denoiser", model.core(), model.sigma_data(), model.geometry(), meta);
}

nlohmann::json checkpoint_json(const BctmModel& model, const nlohmann::json& meta) {
    return base_doc("trajectory", model.core(), model.sigma_data(), model.geometry(), meta);
}

void save_denoiser(const NetDenoiser& model, const std::string& path, const nlohmann::json& meta) {
    write_json_file(checkpoint_json(model, meta), path);
}

void save_trajectory(const BctmModel& model, const std::string& path, const nlohmann::json& meta) {
    write_json_file(checkpoint_json(model, meta), path);
}

NetDenoiser denoiser_from_json(const nlohmann::json& doc) {
    if (doc.value("kind", "") != "denoiser") {
        throw ConfigError("checkpoint kind '" + doc.value("kind", "") + "' is not a denoiser");
    }
    auto core = core_from_json(doc.at("arch"));
    load_params(*core, doc.at("params"));
    return NetDenoiser(std::move(core), doc.at("sigma_data").get<double>(),
                       geometry_from(doc.value("geometry", nlohmann::json())));
}

BctmModel trajectory_from_json(const nlohmann::json& doc) {
    if (doc.value("kind", "") != "trajectory") {
        throw ConfigError("checkpoint kind '" + doc.value("kind", "") + "' is not a trajectory model");
    }
    auto core = core_from_json(doc.at("arch"));
    load_params(*core, doc.at("params"));
    return BctmModel(std::move(core), doc.at("sigma_data").get<double>(),
                     geometry_from(doc.value("geometry", nlohmann::json())));
}

NetDenoiser load_denoiser(const std::string& path) {
    return denoiser_from_json(read_json_file(path));
}

BctmModel load_trajectory(const std::string& path) {
    return trajectory_from_json(read_json_file(path));
}

nlohmann::json checkpoint_meta(const std::string& path) {
    return read_json_file(path).value("meta", nlohmann::json::object());
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
    return doc;
}

void write_json_file(const nlohmann::json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << doc.dump(1, '\t') << "\n";
    if (!out) throw ConfigError("failed while writing '" + path + "'");
}

}  // namespace bgis::models
