#include "lodge/checkpoint.hpp"

#include "lodge/container.hpp"

namespace lodge::ckpt {

bool Checkpoint::has(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

const Mat& Checkpoint::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw io::HeaderError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::put(const std::string& name, Mat value) {
    for (auto& t : tensors) {
        if (t.name == name) {
            t.value = std::move(value);
            return;
        }
    }
    tensors.push_back({name, std::move(value)});
}

void save(const std::filesystem::path& path, const Checkpoint& c) {
    nlohmann::json list = nlohmann::json::array();
    std::vector<double> flat;
    for (const auto& t : c.tensors) {
        list.push_back({{"name", t.name}, {"rows", t.value.rows}, {"cols", t.value.cols}});
        flat.insert(flat.end(), t.value.data.begin(), t.value.data.end());
    }
    nlohmann::json header{{"kind", "checkpoint"}, {"L", flat.size()}, {"channels", std::size_t{1}}, {"tensors", list}, {"meta", c.meta}};
    io::write_file(path, io::encode(std::move(header), flat, io::Dtype::f64));
}

Checkpoint load(const std::filesystem::path& path) {
    const io::Container box = io::read_container(path);
    if (box.header.value("kind", "") != "checkpoint") throw io::HeaderError("not a checkpoint: " + path.string());
    if (box.dtype != io::Dtype::f64) throw io::HeaderError("checkpoint payload must be f64");
    Checkpoint c;
    c.meta = box.header.value("meta", nlohmann::json::object());
    std::size_t off = 0;
    for (const auto& e : box.header.at("tensors")) {
        NamedTensor t;
        t.name = e.at("name").get<std::string>();
        t.value = Mat(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
        if (off + t.value.size() > box.values.size()) throw io::HeaderError("checkpoint tensor table exceeds payload");
        std::copy(box.values.begin() + static_cast<std::ptrdiff_t>(off),
                  box.values.begin() + static_cast<std::ptrdiff_t>(off + t.value.size()), t.value.data.begin());
        off += t.value.size();
        c.tensors.push_back(std::move(t));
    }
    if (off != box.values.size()) throw io::HeaderError("checkpoint tensor table does not cover payload");
    return c;
}

void put_values(Checkpoint& c, const std::string& prefix, const nn::ParamList& ps, const std::vector<Mat>& values) {
    if (values.size() != ps.size()) throw std::invalid_argument("put_values: count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) c.put(prefix + ps[i]->name, values[i]);
}

void put_params(Checkpoint& c, const std::string& prefix, const nn::ParamList& ps) {
    for (const nn::Param* p : ps) c.put(prefix + p->name, p->value);
}

std::vector<Mat> get_values(const Checkpoint& c, const std::string& prefix, const nn::ParamList& ps) {
    std::vector<Mat> out;
    for (const nn::Param* p : ps) {
        const Mat& m = c.get(prefix + p->name);
        if (!m.same_shape(p->value)) throw io::HeaderError("checkpoint tensor '" + prefix + p->name + "' has the wrong shape");
        out.push_back(m);
    }
    return out;
}

void get_params(const Checkpoint& c, const std::string& prefix, const nn::ParamList& ps) {
    nn::load_values(ps, get_values(c, prefix, ps));
}

}  // namespace lodge::ckpt
