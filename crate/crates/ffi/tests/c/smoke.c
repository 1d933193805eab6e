#include <stdio.h>
#include <string.h>

#include "qadapt.h"

#define CHECK(call)                                                         \
  do {                                                                      \
    QadaptStatus s_ = (call);                                               \
    if (s_ != QADAPT_STATUS_OK) {                                           \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, qadapt_last_error()); \
      return 1;                                                             \
    }                                                                       \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) return 2;
  double f1 = 0.0;
  CHECK(qadapt_token_f1("the red car", "red car door", &f1));
  if (f1 < 0.7999999 || f1 > 0.8000001) return 3;

  QadaptCorpus *corpus = NULL;
  CHECK(qadapt_corpus_load(argv[1], &corpus));
  if (qadapt_corpus_len(corpus) == 0) return 4;

  QadaptWeightTable *table = NULL;
  CHECK(qadapt_weights_compute(corpus, corpus, 10.0, &table));
  for (size_t i = 0; i < qadapt_weights_bins(table); i++) {
    double w = 0.0;
    CHECK(qadapt_weights_bin(table, i, NULL, NULL, &w));
    if (w != 1.0) return 5;
  }

  QadaptModel *model = NULL;
  CHECK(qadapt_model_train(corpus,
                           "{\"model\": {\"d_model\": 8, \"n_layers\": 1, \"n_heads\": 1, \"ffn_dim\": 8},"
                           " \"train\": {\"epochs\": 1}}",
                           table, &model));
  double em = -1.0;
  CHECK(qadapt_model_evaluate(model, corpus, &f1, &em));
  if (f1 < 0.0 || f1 > 1.0 || em < 0.0) return 6;

  char *answer = NULL;
  CHECK(qadapt_model_predict(model, "what is pressed?", "press the brake pedal gently", &answer));
  if (strlen(answer) == 0) return 7;
  qadapt_string_free(answer);

  if (qadapt_model_load("/nonexistent/model.ckpt", &model) != QADAPT_STATUS_IO) return 8;
  if (qadapt_last_error() == NULL) return 9;

  qadapt_model_free(model);
  qadapt_weights_free(table);
  qadapt_corpus_free(corpus);
  printf("ok %s\n", qadapt_version());
  return 0;
}
