#include <stdio.h>
#include "twohmm.h"

static const char *MODEL =
    "{\"transitions\": [[0.9, 0.1], [0.1, 0.9]],"
    " \"emissions\": {\"type\": \"categorical\", \"alphabet\": [\"0\", \"1\"],"
    " \"probs_a\": [0.8, 0.2], \"probs_b\": [0.2, 0.8]}}";

int main(void) {
    TwohmmModel *m = NULL;
    if (twohmm_model_from_json(MODEL, &m) != TWOHMM_STATUS_OK) {
        fprintf(stderr, "%s\n", twohmm_last_error_message());
        return 1;
    }
    int32_t c = 0;
    twohmm_model_case(m, &c);
    printf("case %d\n", c);

    uint32_t xs[3] = {0, 0, 1};
    uint8_t states[3];
    if (twohmm_decode_symbols(m, xs, 3, states, NULL) != TWOHMM_STATUS_OK) return 1;
    printf("path ");
    for (int i = 0; i < 3; i++) putchar(states[i] ? 'b' : 'a');
    putchar('\n');

    TwohmmStream *s = NULL;
    twohmm_stream_new(m, &s);
    twohmm_model_free(m);
    printf("segments");
    for (int i = 0; i <= 3; i++) {
        if (i < 3) twohmm_stream_push_symbol(s, xs[i]);
        else twohmm_stream_flush(s);
        TwohmmSegmentInfo info;
        uint8_t buf[8];
        while (twohmm_stream_take_segment(s, buf, sizeof buf, &info) == TWOHMM_STATUS_OK)
            printf(" %llu-%llu", (unsigned long long)info.start, (unsigned long long)info.end);
    }
    putchar('\n');
    twohmm_stream_free(s);
    return 0;
}
