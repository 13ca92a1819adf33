from cureuq.main import main

main()
