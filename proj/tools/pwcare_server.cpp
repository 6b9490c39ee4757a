// pwcare-server: HTTP ingress, operator API and notification delivery.

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "pwcare/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Pregnant-women care and emergency dispatch server"};
  std::string config_path;
  std::string listen;
  std::string data_dir;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--listen", listen, "host:port (overrides config)");
  app.add_option("--data-dir", data_dir, "data directory (overrides config)");
  CLI11_PARSE(app, argc, argv);

  // Signals are handled on a dedicated thread; block them everywhere else.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    auto env = pwcare::service::process_env();
    if (!listen.empty()) env["PWCARE_LISTEN"] = listen;
    if (!data_dir.empty()) env["PWCARE_DATA_DIR"] = data_dir;
    auto config = pwcare::service::load_config(config_path, env);

    pwcare::service::Service service(std::move(config), nullptr, &std::cout);
    service.bind();
    service.start();

    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      service.events().emit("service.stopping", {{"signal", sig}});
      service.stop();
    });
    service.serve();
    // serve() also returns on bind loss; make sure the waiter can exit
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    service.delivery().wait_idle(std::chrono::seconds(5));
  } catch (const pwcare::Error& e) {
    std::cerr << "pwcare-server: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pwcare-server: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
