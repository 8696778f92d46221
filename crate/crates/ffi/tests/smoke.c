#include <stdio.h>
#include <string.h>
#include "flowlens.h"

#define CHECK(x)                                                              \
  do {                                                                        \
    FlStatus s_ = (x);                                                        \
    if (s_ != FL_STATUS_OK) {                                                 \
      const char *e_ = fl_last_error();                                       \
      fprintf(stderr, "%s:%d: status %d: %s\n", __FILE__, __LINE__, (int)s_, \
              e_ ? e_ : "(none)");                                            \
      return 1;                                                               \
    }                                                                         \
  } while (0)

int main(void) {
  uint32_t values[20];
  uint64_t bins[16] = {0};
  for (int i = 0; i < 20; i++) values[i] = (uint32_t)(i * 64);
  CHECK(fl_hist16(values, 20, 64, bins));
  if (bins[0] != 1 || bins[15] != 5) return 2;

  FlDfa *sqli = NULL;
  CHECK(fl_dfa_bundled(FL_PROFILE_SQLI, &sqli));
  const char *in = "1' OR '1'='1";
  FlToken toks[32];
  size_t n = 0;
  CHECK(fl_dfa_tokenize(sqli, (const uint8_t *)in, strlen(in), toks, 32, &n));
  char name[64];
  size_t len = 0;
  CHECK(fl_dfa_token_name(sqli, toks[2].id, name, sizeof name, &len));
  printf("tokens %zu third %s\n", n, name);

  FlDetector *det = NULL;
  CHECK(fl_detector_bundled(0.5, &det));
  FlDetection r;
  CHECK(fl_detector_detect(det, (const uint8_t *)"<script>alert(1)</script>", 25, false, &r));
  printf("verdict %d\n", (int)r.verdict);

  if (fl_detector_bundled(2.0, NULL) != FL_STATUS_NULL_POINTER) return 3;
  printf("error %s\n", fl_last_error());

  fl_detector_free(det);
  fl_dfa_free(sqli);
  return 0;
}
