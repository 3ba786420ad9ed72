#pragma once

namespace metromd {

template <class F>
void CellList::for_each_pair(F&& fn) const {
    int nc = 1;
    for (int k = 0; k < dim; ++k) nc *= bins;

    // half stencil: offsets in {-1,0,1}^dim whose first nonzero entry is +1
    int offs[13][3];
    int n_off = 0;
    int o[3] = {0, 0, 0};
    int total = 1;
    for (int k = 0; k < dim; ++k) total *= 3;
    for (int t = 0; t < total; ++t) {
        int rem = t;
        bool positive = false, decided = false;
        for (int k = dim - 1; k >= 0; --k) {
            o[k] = rem % 3 - 1;
            rem /= 3;
        }
        for (int k = dim - 1; k >= 0 && !decided; --k)
            if (o[k] != 0) {
                positive = o[k] > 0;
                decided = true;
            }
        if (decided && positive) {
            for (int k = 0; k < dim; ++k) offs[n_off][k] = o[k];
            ++n_off;
        }
    }

    auto wrap_bin = [this](int b) { return b < 0 ? b + bins : (b >= bins ? b - bins : b); };

    for (int c = 0; c < nc; ++c) {
        int cc[3] = {0, 0, 0};
        int rem = c;
        for (int k = 0; k < dim; ++k) {
            cc[k] = rem % bins;
            rem /= bins;
        }
        for (int i = head[c]; i != -1; i = next[i])
            for (int j = next[i]; j != -1; j = next[j]) fn(i, j);
        for (int s = 0; s < n_off; ++s) {
            int c2 = 0;
            for (int k = dim - 1; k >= 0; --k) c2 = c2 * bins + wrap_bin(cc[k] + offs[s][k]);
            for (int i = head[c]; i != -1; i = next[i])
                for (int j = head[c2]; j != -1; j = next[j]) fn(i, j);
        }
    }
}

}  // namespace metromd
