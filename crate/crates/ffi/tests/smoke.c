#include <stdio.h>
#include <string.h>

#include "lottery.h"

#define CHECK(call)                                                         \
    do {                                                                    \
        LtStatus st_ = (call);                                              \
        if (st_ != LT_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, st_, lt_last_error()); \
            return 1;                                                       \
        }                                                                   \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke MASK_PATH\n");
        return 2;
    }
    size_t hidden[] = {12, 6};
    LtNetwork *net = NULL;
    CHECK(lt_network_mlp(4, hidden, 2, 3, 7, &net));

    size_t total = 0, remaining = 0;
    CHECK(lt_network_prune(net, 0.2, 0.0));
    CHECK(lt_network_sparsity(net, &total, &remaining));
    /* 48 -> 38, 72 -> 58, 18 -> 16 */
    if (total != 138 || remaining != 112) {
        fprintf(stderr, "counts %zu/%zu\n", remaining, total);
        return 1;
    }
    CHECK(lt_network_rewind(net));

    double x[8] = {0.1, -0.2, 0.3, 0.4, 1.0, 0.0, -1.0, 0.5};
    double logits[6];
    CHECK(lt_network_forward(net, x, 8, 2, logits, 6));

    uint64_t early = 0;
    double acc = 0.0;
    CHECK(lt_network_train_blobs(net, 50, 6.0, 0.01, 100, 3, &early, &acc));
    CHECK(lt_mask_save(net, argv[1]));
    CHECK(lt_mask_load(net, argv[1]));

    if (lt_network_forward(net, x, 7, 2, logits, 6) != LT_STATUS_SHAPE || strlen(lt_last_error()) == 0) {
        fprintf(stderr, "shape error not reported\n");
        return 1;
    }
    if (lt_network_preset(NULL, 0, &net) != LT_STATUS_NULL_POINTER) {
        return 1;
    }
    lt_network_free(net);
    printf("ok early=%llu acc=%.3f\n", (unsigned long long)early, acc);
    return 0;
}
