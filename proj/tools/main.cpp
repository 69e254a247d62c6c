int dcdm_cli_main(int argc, char** argv);
int main(int argc, char** argv) { return dcdm_cli_main(argc, argv); }
