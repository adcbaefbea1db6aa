#pragma once

#include <map>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace dveslt {

// Flat named-array store for all trainable weights plus non-trainable
// buffers (batch-norm running statistics). Gradient accumulators are
// zeroed explicitly by the caller between steps.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        bool trainable = true;
    };

    Entry& create(const std::string& name, Tensor init, bool trainable = true) {
        if (entries_.count(name)) fail("param '" + name + "' already exists");
        Entry e;
        e.grad = Tensor::zeros(init.shape);
        e.value = std::move(init);
        e.trainable = trainable;
        return entries_.emplace(name, std::move(e)).first->second;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) fail("unknown param '" + name + "'");
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) fail("unknown param '" + name + "'");
        return it->second;
    }

    Tensor& value(const std::string& name) { return at(name).value; }
    const Tensor& value(const std::string& name) const { return at(name).value; }
    Tensor& grad(const std::string& name) { return at(name).grad; }

    void zero_grads() {
        for (auto& [k, e] : entries_)
            std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (auto& [k, e] : entries_) out.push_back(k);
        return out;
    }

    // ordered map: deterministic iteration everywhere
    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

private:
    std::map<std::string, Entry> entries_;
};

} // namespace dveslt
